#include "ricl/io/demo_store.hpp"
#include "ricl/pipeline/evaluate.hpp"
#include "ricl/pipeline/train.hpp"
#include "ricl/sim/tasks.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

namespace fs = std::filesystem;
using namespace ricl;

namespace {

std::vector<std::string> split_list(const std::string& csv) {
  std::vector<std::string> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::vector<sim::TaskSpec> resolve_tasks(const std::string& selector) {
  if (selector == "all") return sim::full_suite();
  if (selector == "priming") return sim::priming_suite();
  if (selector == "heldout") return sim::heldout_suite();
  auto suite = sim::full_suite();
  std::vector<sim::TaskSpec> out;
  for (const auto& id : split_list(selector)) out.push_back(sim::find_task(suite, id));
  return out;
}

// Loads every demo of a task from the store, first `count` demos if count > 0.
pipeline::TaskDemos load_task_demos(const std::string& store_dir, const std::string& task_id,
                                    int count) {
  auto manifest = io::read_manifest(store_dir);
  pipeline::TaskDemos td;
  td.spec = sim::find_task(sim::full_suite(), task_id);
  td.demos = io::read_task_demos(store_dir, manifest, task_id);
  if (count > 0) {
    require(int(td.demos.size()) >= count, "insufficient-demos",
            task_id + " has only " + std::to_string(td.demos.size()) + " stored demos");
    td.demos.resize(size_t(count));
  }
  return td;
}

pipeline::DemoSet load_demo_set(const std::string& store_dir,
                                const std::vector<sim::TaskSpec>& tasks, int count) {
  pipeline::DemoSet out;
  for (const auto& t : tasks) out.push_back(load_task_demos(store_dir, t.task_id, count));
  return out;
}

struct GateSpec {
  std::string metric;  // full | wp1
  std::string method_a, method_b;  // method_b empty = absolute threshold
  double threshold;
};

std::vector<GateSpec> parse_gates(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "io-error", "cannot read gates file " + path);
  std::vector<GateSpec> gates;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    GateSpec g;
    std::string tok;
    ss >> g.metric >> g.method_a >> tok;
    if (tok == "-") {
      ss >> g.method_b >> tok;
    }
    require(tok == ">=", "bad-gate", "expected '>=' in gate line: " + line);
    ss >> g.threshold;
    require(g.metric == "full" || g.metric == "wp1", "bad-gate", "metric must be full or wp1");
    gates.push_back(g);
  }
  return gates;
}

int apply_gates(const pipeline::EvalReport& report, const std::vector<GateSpec>& gates) {
  int violations = 0;
  for (const auto& g : gates) {
    auto value_of = [&](const std::string& method) {
      return g.metric == "full" ? report.aggregate_full(method)
                                : report.aggregate_waypoint(method, 0);
    };
    double value = value_of(g.method_a);
    if (!g.method_b.empty()) value -= value_of(g.method_b);
    bool ok = value >= g.threshold;
    std::cout << (ok ? "[gate-pass] " : "[gate-FAIL] ") << g.metric << " " << g.method_a;
    if (!g.method_b.empty()) std::cout << " - " << g.method_b;
    std::cout << " = " << value << " (>= " << g.threshold << ")\n";
    if (!ok) ++violations;
  }
  return violations;
}

void print_waypoints(const sim::WaypointRecord& rec) {
  for (size_t i = 0; i < rec.names.size(); ++i)
    std::cout << "  " << rec.names[i] << ": " << (rec.reached[i] ? "reached" : "-") << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RICL desk-scale pipeline: demos, training, retrieval-augmented deployment, evaluation"};
  app.require_subcommand(1);

  std::string config_path;
  std::string data_dir;
  app.add_option("--config", config_path, "run configuration file")->required();
  app.add_option("--data-dir", data_dir, "artifact root (default $RICL_DATA_DIR or ./data)");

  // gen-demos
  auto* gen = app.add_subcommand("gen-demos", "collect scripted-expert demonstrations");
  std::string gen_tasks = "all";
  int gen_per_task = 20;
  uint64_t gen_seed = 0;
  bool gen_force = false, gen_has_seed = false;
  gen->add_option("--tasks", gen_tasks, "all | priming | heldout | id,id,...");
  gen->add_option("--per-task", gen_per_task, "demonstrations per task (default 20)");
  gen->add_option("--seed", gen_seed, "demo seed (default training.seed)")
      ->each([&](const std::string&) { gen_has_seed = true; });
  gen->add_flag("--force", gen_force, "overwrite an existing store");

  // pretrain / prime / finetune
  auto* pretrain = app.add_subcommand("pretrain", "train the base policy on query-only contexts");
  std::string pre_out;
  bool pre_dry = false;
  pretrain->add_option("--out", pre_out, "output checkpoint")->required();
  pretrain->add_flag("--dry-run", pre_dry, "print resolved config and item counts only");

  auto* prime_cmd = app.add_subcommand("prime", "retrieval-augmented post-training of a base checkpoint");
  std::string prime_in, prime_out;
  int prime_demos = 20;
  bool prime_dry = false;
  prime_cmd->add_option("--in", prime_in, "base checkpoint");
  prime_cmd->add_option("--out", prime_out, "output checkpoint")->required();
  prime_cmd->add_option("--demos-per-task", prime_demos,
                        "priming demos per task taken from the store (default 20)");
  prime_cmd->add_flag("--dry-run", prime_dry, "print resolved config and item counts only");

  auto* ft = app.add_subcommand("finetune", "finetune on one task's demonstrations");
  std::string ft_in, ft_out, ft_task;
  int ft_steps = -1;
  bool ft_vanilla = false, ft_dry = false;
  ft->add_option("--in", ft_in, "parent checkpoint");
  ft->add_option("--out", ft_out, "output checkpoint")->required();
  ft->add_option("--task", ft_task, "target task id")->required();
  ft->add_option("--steps", ft_steps, "training steps (default training.finetune_steps)");
  ft->add_flag("--vanilla", ft_vanilla, "query-only objective (base finetune baseline)");
  ft->add_flag("--dry-run", ft_dry, "print resolved config and item counts only");

  // rollout
  auto* roll = app.add_subcommand("rollout", "run one deployment rollout");
  std::string roll_ckpt, roll_task, roll_method = "ricl-rag", roll_dump;
  int roll_buffer = 0;
  uint64_t roll_seed = 1;
  roll->add_option("--ckpt", roll_ckpt, "policy checkpoint")->required();
  roll->add_option("--task", roll_task, "task id")->required();
  roll->add_option("--method", roll_method, "base | ricl-rag | ricl-ft | retrieve-and-play");
  roll->add_option("--buffer", roll_buffer, "retrieval buffer size in demos from the store");
  roll->add_option("--seed", roll_seed, "rollout seed");
  roll->add_option("--dump-context", roll_dump, "write the first context-assembly debug dump here");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "stacked-waypoint evaluation sweep");
  std::string ev_methods = "base,ricl-rag", ev_tasks = "heldout", ev_report = "report";
  std::string ev_base, ev_ricl, ev_base_ft, ev_ricl_ft, ev_gates;
  int ev_buffer = 20, ev_workers = 0;
  eval_cmd->add_option("--methods", ev_methods, "base,ricl-rag,retrieve-and-play,base-ft,ricl-ft");
  eval_cmd->add_option("--tasks", ev_tasks, "task selector");
  eval_cmd->add_option("--report", ev_report, "report path prefix (.jsonl/.tsv)")->required();
  eval_cmd->add_option("--ckpt-base", ev_base, "base checkpoint");
  eval_cmd->add_option("--ckpt-ricl", ev_ricl, "ricl checkpoint");
  eval_cmd->add_option("--ckpt-base-ft", ev_base_ft, "base-finetuned checkpoint prefix (task id appended)");
  eval_cmd->add_option("--ckpt-ricl-ft", ev_ricl_ft, "ricl-finetuned checkpoint prefix (task id appended)");
  eval_cmd->add_option("--buffer", ev_buffer, "retrieval buffer demos per task");
  eval_cmd->add_option("--gates", ev_gates, "acceptance gates file (nonzero exit on violation)");
  eval_cmd->add_option("--workers", ev_workers, "parallel rollout workers (default eval.workers)");

  // ablate
  auto* abl = app.add_subcommand("ablate", "demo-count ablation on one task");
  std::string ab_task, ab_counts = "5,10,15,20", ab_methods = "ricl-rag", ab_report = "ablation";
  std::string ab_ricl, ab_gates;
  abl->add_option("--task", ab_task, "task id")->required();
  abl->add_option("--counts", ab_counts, "comma-separated demo counts");
  abl->add_option("--methods", ab_methods, "ricl-rag,retrieve-and-play");
  abl->add_option("--report", ab_report, "report path prefix")->required();
  abl->add_option("--ckpt-ricl", ab_ricl, "ricl checkpoint")->required();
  abl->add_option("--gates", ab_gates, "acceptance gates file");

  // no-loss
  auto* nl = app.add_subcommand("no-loss", "random cross-task buffer test on priming tasks");
  std::string nl_ricl, nl_base, nl_tasks, nl_report = "no_loss", nl_gates;
  int nl_buffer = 20;
  nl->add_option("--ckpt-ricl", nl_ricl, "ricl checkpoint")->required();
  nl->add_option("--ckpt-base", nl_base, "base checkpoint")->required();
  nl->add_option("--tasks", nl_tasks, "priming task ids to evaluate")->required();
  nl->add_option("--report", nl_report, "report path prefix")->required();
  nl->add_option("--buffer", nl_buffer, "random buffer size in demos");
  nl->add_option("--gates", nl_gates, "acceptance gates file");

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig cfg = RunConfig::load(config_path);
    if (!data_dir.empty()) cfg.paths.data_dir = data_dir;
    const std::string root = cfg.resolved_data_dir();
    const std::string store_dir = root + "/demos";
    fs::create_directories(root);

    if (*gen) {
      auto tasks = resolve_tasks(gen_tasks);
      uint64_t seed = gen_has_seed ? gen_seed : cfg.training.seed;
      auto demos = pipeline::generate_demo_set(tasks, gen_per_task, seed, cfg);
      std::map<std::string, std::vector<sim::Demonstration>> by_task;
      for (auto& td : demos) by_task[td.spec.task_id] = std::move(td.demos);
      io::write_demo_store(store_dir, by_task, cfg, gen_force);
      auto manifest = io::read_manifest(store_dir);
      std::cout << "wrote " << manifest.total_demos() << " demos across " << manifest.tasks.size()
                << " tasks to " << store_dir << "\n";
      return 0;
    }

    if (*pretrain) {
      auto demos = load_demo_set(store_dir, sim::priming_suite(), 0);
      if (pre_dry) {
        size_t items = 0;
        for (const auto& td : demos)
          for (const auto& d : td.demos) items += size_t(d.length());
        std::cout << cfg.canonical() << "pretrain items: " << items << "\n";
        return 0;
      }
      auto bundle = pipeline::pretrain_base(demos, cfg, &std::cout);
      uint64_t h = io::save_checkpoint(bundle, pre_out);
      std::cout << "saved " << pre_out << " (" << hex64(h) << ")\n";
      return 0;
    }

    if (*prime_cmd) {
      require(!prime_in.empty(), "missing-parent", "prime needs --in <base checkpoint>");
      auto base = io::load_checkpoint(prime_in);
      base.cfg = cfg;
      auto demos = load_demo_set(store_dir, sim::priming_suite(), prime_demos);
      auto dataset = pipeline::build_priming_dataset(demos, base, cfg.retrieval.k);
      if (prime_dry) {
        std::cout << cfg.canonical() << "priming items: " << dataset.size() << "\n";
        return 0;
      }
      auto bundle = pipeline::prime(base, dataset, cfg, hex64(io::file_hash(prime_in)), &std::cout);
      uint64_t h = io::save_checkpoint(bundle, prime_out);
      std::cout << "saved " << prime_out << " (" << hex64(h) << ")\n";
      return 0;
    }

    if (*ft) {
      require(!ft_in.empty(), "missing-parent", "finetune needs --in <parent checkpoint>");
      auto parent = io::load_checkpoint(ft_in);
      parent.cfg = cfg;
      auto target = load_task_demos(store_dir, ft_task, 0);
      int steps = ft_steps >= 0 ? ft_steps : cfg.training.finetune_steps;
      if (ft_dry) {
        size_t items = 0;
        for (const auto& d : target.demos) items += size_t(d.length());
        std::cout << cfg.canonical() << "finetune items: " << items << ", steps: " << steps << "\n";
        return 0;
      }
      std::string parent_hash = hex64(io::file_hash(ft_in));
      if (ft_vanilla) {
        auto bundle = pipeline::finetune_base(parent, target, cfg, steps, parent_hash, &std::cout);
        uint64_t h = io::save_checkpoint(bundle, ft_out);
        std::cout << "saved " << ft_out << " (" << hex64(h) << ")\n";
      } else {
        auto res = pipeline::finetune(parent, target, cfg, steps, parent_hash, &std::cout);
        uint64_t h = io::save_checkpoint(res.bundle, ft_out);
        std::cout << "saved " << ft_out << " (" << hex64(h) << ") buffer "
                  << hex64(res.buffer->content_hash()) << "\n";
      }
      return 0;
    }

    if (*roll) {
      auto bundle = io::load_checkpoint(roll_ckpt);
      pipeline::RolloutPolicy policy;
      policy.bundle = &bundle;
      policy.exec = {cfg.eval.pre_grip_actions, roll_method == "ricl-ft"
                                                    ? cfg.eval.post_grip_actions_finetuned
                                                    : cfg.eval.post_grip_actions};
      std::unique_ptr<retrieval::Index> buffer;
      pipeline::TaskDemos target;
      if (roll_method == "base") {
        policy.kind = pipeline::MethodKind::Base;
      } else {
        require(roll_buffer > 0, "missing-buffer",
                "--method " + roll_method + " requires --buffer");
        policy.kind = roll_method == "retrieve-and-play" ? pipeline::MethodKind::RetrieveAndPlay
                                                         : pipeline::MethodKind::RiclRag;
        target = load_task_demos(store_dir, roll_task, roll_buffer);
        std::vector<const sim::Demonstration*> ptrs;
        for (const auto& d : target.demos) ptrs.push_back(&d);
        buffer = std::make_unique<retrieval::Index>(
            retrieval::Index::build(ptrs, {target.spec}, *bundle.embedder, *bundle.codec));
        policy.buffer = buffer.get();
        if (roll_method == "ricl-ft" && !bundle.meta.buffer_hash.empty() &&
            bundle.meta.buffer_hash != hex64(buffer->content_hash()))
          std::cerr << "warning: rollout buffer differs from the finetune buffer hash\n";
      }
      sim::Env env(sim::find_task(sim::full_suite(), roll_task), cfg.env);

      if (!roll_dump.empty() && policy.kind == pipeline::MethodKind::RiclRag) {
        auto [state, obs] = env.reset(roll_seed);
        auto q = bundle.embedder->embed_top_image(obs.top_image);
        auto res = policy.buffer->query(q.vector, cfg.retrieval.k);
        policy::QueryGroup query;
        query.image_tokens = bundle.embedder->image_to_tokens(obs.top_image);
        query.prompt_ids = bundle.codec->encode_prompt(env.task().prompt);
        query.proprio = obs.proprio;
        policy::AssembleConfig acfg{cfg.retrieval.k, bundle.mcfg.width, bundle.mcfg.context_length,
                                    cfg.retrieval.k};
        std::vector<policy::NeighborGroup> groups;
        for (const auto& n : res.neighbors) {
          const auto& e = policy.buffer->entry(n.entry);
          groups.push_back({&policy.buffer->image_tokens(n.entry),
                            &policy.buffer->task(e.task_idx).prompt_ids, e.proprio, &e.action_ids,
                            n.distance, e.demo_id, e.step_index});
        }
        auto ctx = policy::assemble_context(groups, query, *bundle.codec, acfg);
        std::ofstream dump(roll_dump);
        ctx.debug_dump(dump);
        std::cout << "wrote context dump to " << roll_dump << "\n";
      }

      auto res = pipeline::rollout(env, policy, roll_seed);
      std::cout << "task " << roll_task << " method " << roll_method << " seed " << roll_seed
                << "\n";
      print_waypoints(res.waypoints);
      std::cout << "env steps: " << res.states.size() - 1
                << " (pre-grip inferences: " << res.pre_inferences
                << ", post-grip: " << res.post_inferences << ")\n";
      return res.waypoints.full_success() ? 0 : 1;
    }

    auto make_buffer_map = [&](const io::PolicyBundle& bundle, const std::vector<sim::TaskSpec>& tasks,
                               int count) {
      auto buffers = std::make_shared<std::map<std::string, std::unique_ptr<retrieval::Index>>>();
      for (const auto& t : tasks) {
        auto td = load_task_demos(store_dir, t.task_id, count);
        std::vector<const sim::Demonstration*> ptrs;
        for (const auto& d : td.demos) ptrs.push_back(&d);
        (*buffers)[t.task_id] = std::make_unique<retrieval::Index>(
            retrieval::Index::build(ptrs, {td.spec}, *bundle.embedder, *bundle.codec));
      }
      return buffers;
    };

    if (*eval_cmd) {
      auto tasks = resolve_tasks(ev_tasks);
      std::map<std::string, io::PolicyBundle> bundles;
      auto load_into = [&](const std::string& key, const std::string& path) -> io::PolicyBundle& {
        auto [it, fresh] = bundles.try_emplace(key);
        if (fresh) it->second = io::load_checkpoint(path);
        return it->second;
      };
      pipeline::ExecPolicy exec{cfg.eval.pre_grip_actions, cfg.eval.post_grip_actions};
      pipeline::ExecPolicy exec_ft{cfg.eval.pre_grip_actions, cfg.eval.post_grip_actions_finetuned};

      std::vector<pipeline::MethodEval> methods;
      std::vector<std::shared_ptr<std::map<std::string, std::unique_ptr<retrieval::Index>>>> keep;
      for (const auto& name : split_list(ev_methods)) {
        pipeline::MethodEval m;
        m.name = name;
        if (name == "base") {
          require(!ev_base.empty(), "missing-checkpoint", "base method needs --ckpt-base");
          m.kind = pipeline::MethodKind::Base;
          m.bundle = &load_into("base", ev_base);
          m.exec = exec;
        } else if (name == "ricl-rag" || name == "retrieve-and-play") {
          require(!ev_ricl.empty(), "missing-checkpoint", name + " needs --ckpt-ricl");
          require(ev_buffer > 0, "missing-buffer", "--method " + name + " requires --buffer");
          m.kind = name == "ricl-rag" ? pipeline::MethodKind::RiclRag
                                      : pipeline::MethodKind::RetrieveAndPlay;
          m.bundle = &load_into("ricl", ev_ricl);
          m.exec = exec;
          auto buffers = make_buffer_map(*m.bundle, tasks, ev_buffer);
          keep.push_back(buffers);
          m.buffer_for = [buffers](const std::string& id) { return (*buffers).at(id).get(); };
        } else if (name == "base-ft" || name == "ricl-ft") {
          // per-task checkpoints: <prefix><task>.ckpt
          const std::string& prefix = name == "base-ft" ? ev_base_ft : ev_ricl_ft;
          require(!prefix.empty(), "missing-checkpoint",
                  name + " needs --ckpt-" + name + " <prefix>");
          m.kind = name == "ricl-ft" ? pipeline::MethodKind::RiclRag : pipeline::MethodKind::Base;
          m.exec = name == "ricl-ft" ? exec_ft : exec;
          auto per_task = std::make_shared<std::map<std::string, const io::PolicyBundle*>>();
          for (const auto& t : tasks)
            (*per_task)[t.task_id] =
                &load_into(name + ":" + t.task_id, prefix + t.task_id + ".ckpt");
          m.bundle_for = [per_task](const std::string& id) { return per_task->at(id); };
          if (name == "ricl-ft") {
            require(ev_buffer > 0, "missing-buffer", "--method ricl-ft requires --buffer");
            auto buffers = std::make_shared<std::map<std::string, std::unique_ptr<retrieval::Index>>>();
            for (const auto& t : tasks) {
              auto sub = make_buffer_map(*per_task->at(t.task_id), {t}, ev_buffer);
              (*buffers)[t.task_id] = std::move((*sub)[t.task_id]);
            }
            keep.push_back(buffers);
            m.buffer_for = [buffers](const std::string& id) { return buffers->at(id).get(); };
          }
        } else {
          fail("unknown-method", name);
        }
        methods.push_back(std::move(m));
      }

      pipeline::EvalRequest req;
      req.methods = std::move(methods);
      req.tasks = tasks;
      req.n_rollouts = cfg.eval.n_rollouts;
      req.seeds = cfg.eval.seeds;
      req.workers = ev_workers > 0 ? ev_workers : cfg.eval.workers;
      auto report = pipeline::evaluate(req, cfg);
      report.write_jsonl(ev_report + ".jsonl");
      report.write_tsv(ev_report + ".tsv");
      std::cout << "wrote " << ev_report << ".jsonl and .tsv (" << report.cells.size()
                << " cells)\n";
      if (!ev_gates.empty()) return apply_gates(report, parse_gates(ev_gates)) ? 1 : 0;
      return 0;
    }

    if (*abl) {
      auto bundle = io::load_checkpoint(ab_ricl);
      auto target = load_task_demos(store_dir, ab_task, 0);
      std::vector<int> counts;
      for (const auto& c : split_list(ab_counts)) counts.push_back(std::stoi(c));
      pipeline::ExecPolicy exec{cfg.eval.pre_grip_actions, cfg.eval.post_grip_actions};
      std::vector<pipeline::AblateMethod> methods;
      for (const auto& name : split_list(ab_methods)) {
        if (name == "ricl-rag")
          methods.push_back({"ricl-rag", pipeline::MethodKind::RiclRag, &bundle, exec});
        else if (name == "retrieve-and-play")
          methods.push_back({"retrieve-and-play", pipeline::MethodKind::RetrieveAndPlay, &bundle, exec});
        else
          fail("unknown-method", name + " (ablate supports ricl-rag, retrieve-and-play)");
      }
      auto report = pipeline::ablate_num_demos(target, counts, methods, cfg);
      report.write_jsonl(ab_report + ".jsonl");
      report.write_tsv(ab_report + ".tsv");
      std::cout << "wrote " << ab_report << ".jsonl and .tsv\n";
      if (!ab_gates.empty()) return apply_gates(report, parse_gates(ab_gates)) ? 1 : 0;
      return 0;
    }

    if (*nl) {
      auto ricl_bundle = io::load_checkpoint(nl_ricl);
      auto base_bundle = io::load_checkpoint(nl_base);
      auto demos = load_demo_set(store_dir, sim::priming_suite(), 0);
      auto report = pipeline::no_loss_test(ricl_bundle, base_bundle, demos, split_list(nl_tasks),
                                           nl_buffer, cfg);
      report.write_jsonl(nl_report + ".jsonl");
      report.write_tsv(nl_report + ".tsv");
      std::cout << "wrote " << nl_report << ".jsonl and .tsv\n";
      if (!nl_gates.empty()) return apply_gates(report, parse_gates(nl_gates)) ? 1 : 0;
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
