#pragma once

namespace lrtd {

// Entry point for the lrtd tool. Returns 0 on success, 2 on validation
// failure (bad flags, bad inputs, fingerprint mismatch), 1 on internal error.
int cli_main(int argc, const char *const *argv);

}  // namespace lrtd
