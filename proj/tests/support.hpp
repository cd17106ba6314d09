#pragma once

// Shared test helpers and independent oracles. Everything here is written
// against the documented behavior, not against the implementation internals,
// so the checks stay meaningful.

#include <atomic>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "mmm/core/tensor.hpp"

namespace testsupport {

// Unique scratch directory, removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<unsigned> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("mmm_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
    std::filesystem::path path_;
};

inline void write_text(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f << content;
}

inline std::string read_text(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

// Naive sliding-window 1-D convolution, O(C_out * C_in * K * L') nested
// loops over an explicitly padded copy of the input.
inline std::vector<double> naive_conv1d(const std::vector<double>& x, std::size_t c_in,
                                        std::size_t len, const std::vector<double>& w,
                                        std::size_t c_out, std::size_t k,
                                        const std::vector<double>& bias, std::size_t stride,
                                        std::size_t pad_left, std::size_t pad_right,
                                        std::size_t* out_len_out = nullptr) {
    const std::size_t padded_len = len + pad_left + pad_right;
    std::vector<double> padded(c_in * padded_len, 0.0);
    for (std::size_t ci = 0; ci < c_in; ++ci)
        for (std::size_t j = 0; j < len; ++j) padded[ci * padded_len + pad_left + j] = x[ci * len + j];

    // Enumerate valid window start positions 0, stride, 2*stride, ...
    std::vector<std::size_t> starts;
    for (std::size_t s = 0; s + k <= padded_len; s += stride) starts.push_back(s);
    const std::size_t out_len = starts.size();
    if (out_len_out) *out_len_out = out_len;

    std::vector<double> y(c_out * out_len, 0.0);
    for (std::size_t co = 0; co < c_out; ++co)
        for (std::size_t t = 0; t < out_len; ++t) {
            double acc = bias[co];
            for (std::size_t ci = 0; ci < c_in; ++ci)
                for (std::size_t kk = 0; kk < k; ++kk)
                    acc += padded[ci * padded_len + starts[t] + kk] * w[(co * c_in + ci) * k + kk];
            y[co * out_len + t] = acc;
        }
    return y;
}

// Plain softmax over a row subset, for checking masked softmax against the
// "softmax over kept positions only" definition.
inline std::vector<double> softmax_subset(const std::vector<double>& row,
                                          const std::vector<std::size_t>& kept) {
    double mx = row[kept[0]];
    for (std::size_t j : kept) mx = std::max(mx, row[j]);
    double sum = 0.0;
    std::vector<double> out(row.size(), 0.0);
    for (std::size_t j : kept) {
        out[j] = std::exp(row[j] - mx);
        sum += out[j];
    }
    for (std::size_t j : kept) out[j] /= sum;
    return out;
}

// Per-position -log softmax oracle for the ignore-aware cross entropy.
inline double ce_oracle(const std::vector<double>& logits, std::size_t t, std::size_t v,
                        const std::vector<int>& labels, int ignore_id) {
    double total = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < t; ++i) {
        if (labels[i] == ignore_id) continue;
        double mx = logits[i * v];
        for (std::size_t j = 1; j < v; ++j) mx = std::max(mx, logits[i * v + j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < v; ++j) sum += std::exp(logits[i * v + j] - mx);
        total += mx + std::log(sum) - logits[i * v + static_cast<std::size_t>(labels[i])];
        ++n;
    }
    return n == 0 ? 0.0 : total / static_cast<double>(n);
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

inline double rel_diff(double a, double b) {
    return std::fabs(a - b) / std::max({1.0, std::fabs(a), std::fabs(b)});
}

} // namespace testsupport
