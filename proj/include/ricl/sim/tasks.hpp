#pragma once

#include "ricl/sim/types.hpp"

namespace ricl::sim {

// 16 priming tasks: 8 goal templates x {red square, blue circle} primaries.
std::vector<TaskSpec> priming_suite();

// Held-out tasks: unseen color/shape/goal combinations plus one novel
// motion (drag: transport while touching the table).
std::vector<TaskSpec> heldout_suite();

std::vector<TaskSpec> full_suite();

const TaskSpec& find_task(const std::vector<TaskSpec>& suite, const std::string& task_id);

// Sorted union of all words appearing in suite prompts.
std::vector<std::string> prompt_lexicon();

}  // namespace ricl::sim
