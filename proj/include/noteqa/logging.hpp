#pragma once

#include <functional>
#include <iostream>
#include <mutex>
#include <string>
#include <utility>

namespace noteqa::log {

using Sink = std::function<void(const std::string&)>;

namespace detail {
inline std::mutex& mutex() {
    static std::mutex m;
    return m;
}
inline Sink& sink() {
    static Sink s = [](const std::string& msg) { std::cerr << "warning: " << msg << "\n"; };
    return s;
}
}  // namespace detail

// Non-fatal diagnostics (degenerate inputs, fallbacks taken, unparseable
// completions). Pipeline outputs never depend on whether a warning fired.
inline void warn(const std::string& msg) {
    std::lock_guard<std::mutex> lock(detail::mutex());
    detail::sink()(msg);
}

// Replaces the warning sink, returning the previous one. Tests use this to
// capture diagnostics; pass nullptr-like lambda to silence.
inline Sink set_sink(Sink s) {
    std::lock_guard<std::mutex> lock(detail::mutex());
    Sink old = detail::sink();
    detail::sink() = std::move(s);
    return old;
}

}  // namespace noteqa::log
