#pragma once

namespace igds::tools {

/// Quick oracle and property checks; prints one PASS/FAIL line each.
/// Returns 0 when all pass, 2 otherwise.
int run_selftest();

}  // namespace igds::tools
