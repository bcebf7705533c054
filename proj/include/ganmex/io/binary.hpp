#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ganmex/tensor/tensor.hpp"

namespace ganmex::io {

/// Malformed container. The message carries the byte offset and the field being read.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Little-endian writer into an in-memory byte buffer.
class BinaryWriter {
public:
    void raw(std::string_view bytes) { buffer_.append(bytes); }
    void u8(std::uint8_t v) { buffer_.push_back(static_cast<char>(v)); }
    void u64(std::uint64_t v);
    void f64(double v);
    void str(std::string_view s);
    void tensor(const Tensor& t);

    const std::string& bytes() const noexcept { return buffer_; }

private:
    std::string buffer_;
};

class BinaryReader {
public:
    explicit BinaryReader(std::string_view bytes) : bytes_(bytes) {}

    std::string raw(std::size_t n, std::string_view field);
    std::uint8_t u8(std::string_view field);
    std::uint64_t u64(std::string_view field);
    double f64(std::string_view field);
    std::string str(std::string_view field);
    Tensor tensor(std::string_view field);

    std::size_t offset() const noexcept { return pos_; }
    bool at_end() const noexcept { return pos_ == bytes_.size(); }
    void expect_end(std::string_view what) const;

private:
    void need(std::size_t n, std::string_view field) const;

    std::string_view bytes_;
    std::size_t pos_ = 0;
};

/// Checks a 7-byte magic of the form PREFIX + version digit, e.g. "GMXNET1".
/// A matching prefix with another version yields an error naming both versions.
void expect_magic(BinaryReader& reader, std::string_view expected);

std::string read_file(const std::string& path);
/// Writes to `path.tmp` and renames over `path`.
void write_file_atomic(const std::string& path, std::string_view bytes);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes);

}  // namespace ganmex::io
