#pragma once

#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "autodiag/errors.hpp"

namespace autodiag {

// Little-endian binary buffer writer. Model containers and matrix dumps
// go through this so files are byte-identical across runs and platforms.
class ByteWriter {
public:
    void u8(uint8_t v) { buf_.push_back(static_cast<char>(v)); }
    void u32(uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    void u64(uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    void i32(int32_t v) { u32(static_cast<uint32_t>(v)); }
    void f64(double v) {
        uint64_t bits;
        std::memcpy(&bits, &v, 8);
        u64(bits);
    }
    void f64_vec(std::span<const double> v) {
        u64(v.size());
        for (double x : v) f64(x);
    }
    void str(std::string_view s) {
        u64(s.size());
        buf_.append(s.data(), s.size());
    }
    void raw(std::string_view s) { buf_.append(s.data(), s.size()); }

    const std::string& buffer() const { return buf_; }
    std::string take() { return std::move(buf_); }

private:
    std::string buf_;
};

class ByteReader {
public:
    explicit ByteReader(std::string_view data) : data_(data) {}

    uint8_t u8() { return static_cast<uint8_t>(take(1)[0]); }
    uint32_t u32() {
        auto p = take(4);
        uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<uint8_t>(p[i]);
        return v;
    }
    uint64_t u64() {
        auto p = take(8);
        uint64_t v = 0;
        for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<uint8_t>(p[i]);
        return v;
    }
    int32_t i32() { return static_cast<int32_t>(u32()); }
    double f64() {
        uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    std::vector<double> f64_vec() {
        uint64_t n = u64();
        check(n * 8);
        std::vector<double> v(n);
        for (auto& x : v) x = f64();
        return v;
    }
    std::string str() {
        uint64_t n = u64();
        auto p = take(n);
        return std::string(p);
    }
    bool done() const { return pos_ == data_.size(); }
    size_t remaining() const { return data_.size() - pos_; }

private:
    void check(uint64_t n) const {
        if (pos_ + n > data_.size()) throw ModelError("truncated binary container");
    }
    std::string_view take(uint64_t n) {
        check(n);
        std::string_view p = data_.substr(pos_, n);
        pos_ += n;
        return p;
    }
    std::string_view data_;
    size_t pos_ = 0;
};

// Whole-file helpers.
std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view data);

}  // namespace autodiag
