#include "medseg/common.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <iostream>
#include <mutex>
#include <thread>

namespace medseg {

namespace {
std::mutex g_warn_mutex;
WarningHandler g_warn_handler;
}  // namespace

void set_warning_handler(WarningHandler handler) {
    std::lock_guard lock(g_warn_mutex);
    g_warn_handler = std::move(handler);
}

void warn(std::string_view message) {
    std::lock_guard lock(g_warn_mutex);
    if (g_warn_handler) {
        g_warn_handler(message);
    } else {
        std::cerr << "warning: " << message << '\n';
    }
}

Tokens split_whitespace(std::string_view text) {
    Tokens out;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        std::size_t j = i;
        while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
        if (j > i) out.emplace_back(text.substr(i, j - i));
        i = j;
    }
    return out;
}

std::vector<std::string> split(std::string_view text, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = text.find(sep, start);
        if (pos == std::string_view::npos) {
            out.emplace_back(text.substr(start));
            return out;
        }
        out.emplace_back(text.substr(start, pos - start));
        start = pos + 1;
    }
}

std::string join(const Tokens& tokens, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i) out += sep;
        out += tokens[i];
    }
    return out;
}

std::string format_double(double value) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", value == 0.0 ? 0.0 : value);
    return buf;
}

std::string format_fixed(double value, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, value);
    std::string s = buf;
    // Avoid "-0.000" flicker between runs that differ only in the sign of zero.
    if (s.find_first_not_of("-0.") == std::string::npos && s[0] == '-') s.erase(0, 1);
    return s;
}

double parse_double(std::string_view text, std::string_view what) {
    std::string s(text);
    try {
        std::size_t used = 0;
        double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw Error("cannot parse " + std::string(what) + " as a number: '" + s + "'");
    }
}

long long parse_int(std::string_view text, std::string_view what) {
    long long v = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size()) {
        throw Error("cannot parse " + std::string(what) + " as an integer: '" +
                    std::string(text) + "'");
    }
    return v;
}

std::size_t shard_count(std::size_t n, int workers) {
    if (n == 0) return 0;
    return std::clamp<std::size_t>(workers < 1 ? 1 : static_cast<std::size_t>(workers), 1, n);
}

void parallel_shards(std::size_t n, int workers,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& body) {
    const std::size_t w = shard_count(n, workers);
    if (w == 0) return;
    if (w == 1) {
        body(0, 0, n);
        return;
    }
    std::vector<std::thread> threads;
    threads.reserve(w);
    std::exception_ptr failure;
    std::mutex failure_mutex;
    for (std::size_t t = 0; t < w; ++t) {
        const std::size_t begin = n * t / w;
        const std::size_t end = n * (t + 1) / w;
        threads.emplace_back([&, t, begin, end] {
            try {
                body(t, begin, end);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        });
    }
    for (auto& th : threads) th.join();
    if (failure) std::rethrow_exception(failure);
}

void parallel_for(std::size_t n, int workers,
                  const std::function<void(std::size_t, std::size_t)>& body) {
    parallel_shards(n, workers,
                    [&](std::size_t, std::size_t begin, std::size_t end) { body(begin, end); });
}

}  // namespace medseg
