#pragma once

#include <functional>
#include <string>

namespace cfqp {

using WarningSink = std::function<void(const std::string&)>;

// Warnings go to stderr unless a sink is installed. Not for hot paths.
void set_warning_sink(WarningSink sink);
void warn(const std::string& message);

} // namespace cfqp
