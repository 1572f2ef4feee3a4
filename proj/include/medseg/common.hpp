#pragma once

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace medseg {

/// Base error for every failure reported by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using Tokens = std::vector<std::string>;

/// Warnings go to stderr unless a handler is installed (tests capture them).
using WarningHandler = std::function<void(std::string_view)>;
void set_warning_handler(WarningHandler handler);
void warn(std::string_view message);

/// Splits on runs of ASCII whitespace.
Tokens split_whitespace(std::string_view text);
/// Splits on a single character, keeping empty fields.
std::vector<std::string> split(std::string_view text, char sep);
std::string join(const Tokens& tokens, std::string_view sep = " ");

/// Shortest round-trippable decimal ("%.17g"); stable bytes for identical input.
std::string format_double(double value);
/// Fixed-point with the given digits, for human-facing tables.
std::string format_fixed(double value, int digits);
double parse_double(std::string_view text, std::string_view what);
long long parse_int(std::string_view text, std::string_view what);

/// Runs body(begin, end) over [0, n) split into `workers` contiguous shards.
/// workers <= 1 runs inline on the calling thread.
void parallel_for(std::size_t n, int workers,
                  const std::function<void(std::size_t, std::size_t)>& body);
/// Same, but body(shard, begin, end) also receives the shard index in [0, shard_count).
std::size_t shard_count(std::size_t n, int workers);
void parallel_shards(std::size_t n, int workers,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& body);

}  // namespace medseg
