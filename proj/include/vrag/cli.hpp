#pragma once

#include <ostream>

namespace vrag {

/// Entry point of the `vrag` tool: ingest, index, run, evaluate, report.
/// Returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace vrag
