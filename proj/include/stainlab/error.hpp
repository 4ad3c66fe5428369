#pragma once

#include <stdexcept>
#include <string>

namespace stainlab {

/// Base of every error raised by the library. The category drives CLI exit codes.
class Error : public std::runtime_error {
public:
    enum class Category { config = 2, io = 3, contract = 4, data = 5, numeric = 6 };

    Error(Category category, const std::string& what) : std::runtime_error(what), category_(category) {}

    Category category() const noexcept { return category_; }

private:
    Category category_;
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& what) : Error(Category::config, what) {}
};

struct IoError : Error {
    explicit IoError(const std::string& what) : Error(Category::io, what) {}
};

/// Shape or range preconditions violated by the caller.
struct ContractError : Error {
    explicit ContractError(const std::string& what) : Error(Category::contract, what) {}
};

/// Input data that is well formed but unusable (unregistered pair, slide too small, ...).
struct DataError : Error {
    explicit DataError(const std::string& what) : Error(Category::data, what) {}
};

struct NumericError : Error {
    explicit NumericError(const std::string& what) : Error(Category::numeric, what) {}
};

inline const char* category_name(Error::Category c) {
    switch (c) {
        case Error::Category::config: return "config";
        case Error::Category::io: return "io";
        case Error::Category::contract: return "contract";
        case Error::Category::data: return "data";
        case Error::Category::numeric: return "numeric";
    }
    return "unknown";
}

}  // namespace stainlab
