#pragma once

#include <string_view>

namespace vtol {

/// Non-fatal diagnostics (out-of-bounds inputs and the like). Messages go to
/// stderr unless silenced; the running count is kept either way so callers
/// can surface a warning flag.
void warn(std::string_view message);
void set_warnings_to_stderr(bool enabled);
[[nodiscard]] long warning_count();

}  // namespace vtol
