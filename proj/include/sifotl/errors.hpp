#ifndef SIFOTL_ERRORS_HPP
#define SIFOTL_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace sifotl {

/// Bad input, bad config, or a violated precondition. Maps to CLI exit code 1.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A pipeline stage could not produce its artifact. Maps to CLI exit code 2.
class StageError : public std::runtime_error {
public:
    StageError(std::string stage, const std::string& what)
        : std::runtime_error("[" + stage + "] " + what), stage_(std::move(stage)) {}

    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

/// LLM provider transport or response failure. Maps to CLI exit code 3.
class ProviderError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace sifotl

#endif // SIFOTL_ERRORS_HPP
