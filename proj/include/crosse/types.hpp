#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

namespace crosse {

using EntityId = std::int32_t;
using RelationId = std::int32_t;

struct Triple {
    EntityId head = 0;
    RelationId relation = 0;
    EntityId tail = 0;

    friend bool operator==(const Triple&, const Triple&) = default;
    friend auto operator<=>(const Triple&, const Triple&) = default;
};

/// Base class for all errors raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public Error {
public:
    ParseError(const std::string& source, std::size_t line, const std::string& what)
        : Error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

enum class Split : std::uint8_t { Train = 1, Valid = 2, Test = 4 };

/// Bit set of Split values.
using SplitMask = std::uint8_t;

constexpr SplitMask mask(Split s) { return static_cast<SplitMask>(s); }
constexpr SplitMask kAllSplits = 1 | 2 | 4;

std::string to_string(Split s);
Split split_from_string(const std::string& name);

}  // namespace crosse

template <>
struct std::hash<crosse::Triple> {
    std::size_t operator()(const crosse::Triple& t) const noexcept {
        std::uint64_t x = static_cast<std::uint32_t>(t.head);
        x = x * 0x9E3779B97F4A7C15ULL ^ static_cast<std::uint32_t>(t.relation);
        x = x * 0x9E3779B97F4A7C15ULL ^ static_cast<std::uint32_t>(t.tail);
        return static_cast<std::size_t>(x ^ (x >> 29));
    }
};
