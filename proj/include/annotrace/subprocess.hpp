#pragma once

#include <optional>
#include <string>
#include <vector>

namespace annotrace {

struct ProcessResult {
  int exit_code = 0;
  std::string stdout_text;
};

/// Resolves a program name against PATH (names containing '/' are checked
/// directly). Absent when no executable file is found.
std::optional<std::string> find_executable(const std::string& program);

/// Runs argv[0] with the given arguments, capturing stdout. stderr is
/// inherited. Throws Error(BackendUnavailable) when the program cannot be
/// started.
ProcessResult run_process(const std::vector<std::string>& argv);

}  // namespace annotrace
