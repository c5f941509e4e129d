#pragma once

#include <stdexcept>
#include <string>

namespace dorqf {

/// Base class of every exception thrown by the library. The category maps
/// onto the command-line exit codes (usage = 1, data = 2, numerical = 3).
class Error : public std::runtime_error {
public:
    enum class Category { Usage = 1, Data = 2, Numerical = 3 };

    Error(Category category, const std::string& what)
        : std::runtime_error(what), category_(category) {}

    Category category() const noexcept { return category_; }
    int exit_code() const noexcept { return static_cast<int>(category_); }

private:
    Category category_;
};

class UsageError : public Error {
public:
    explicit UsageError(const std::string& what) : Error(Category::Usage, what) {}
};

class DataError : public Error {
public:
    explicit DataError(const std::string& what) : Error(Category::Data, what) {}
};

class NumericalError : public Error {
public:
    explicit NumericalError(const std::string& what) : Error(Category::Numerical, what) {}
};

/// Emits a warning line on standard error (prefixed "warning: ").
/// Can be silenced process-wide, which the Monte-Carlo drivers do.
void warn(const std::string& message);
void set_warnings_enabled(bool enabled);

}  // namespace dorqf
