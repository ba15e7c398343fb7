#ifndef SIFOTL_DETAIL_LOG_HPP
#define SIFOTL_DETAIL_LOG_HPP

#include <functional>
#include <iostream>
#include <string>

namespace sifotl {

enum class LogLevel { info, warning };

using LogSink = std::function<void(LogLevel, const std::string&)>;

namespace detail {
inline LogSink& log_sink() {
    static LogSink sink = [](LogLevel level, const std::string& msg) {
        std::cerr << (level == LogLevel::warning ? "warning: " : "") << msg << '\n';
    };
    return sink;
}
} // namespace detail

/// Replace the process-wide log sink; returns the previous one.
inline LogSink set_log_sink(LogSink sink) {
    auto prev = std::move(detail::log_sink());
    detail::log_sink() = std::move(sink);
    return prev;
}

inline void log_info(const std::string& msg) {
    if (detail::log_sink()) detail::log_sink()(LogLevel::info, msg);
}

inline void log_warning(const std::string& msg) {
    if (detail::log_sink()) detail::log_sink()(LogLevel::warning, msg);
}

} // namespace sifotl

#endif
