#include "ganmex/io/binary.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace ganmex::io {

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

void BinaryWriter::u64(std::uint64_t v) {
    char b[8];
    std::memcpy(b, &v, 8);
    buffer_.append(b, 8);
}

void BinaryWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void BinaryWriter::str(std::string_view s) {
    u64(s.size());
    buffer_.append(s);
}

void BinaryWriter::tensor(const Tensor& t) {
    u64(t.rank());
    for (auto d : t.shape()) u64(d);
    for (double v : t.values()) f64(v);
}

void BinaryReader::need(std::size_t n, std::string_view field) const {
    if (bytes_.size() - pos_ < n) {
        std::ostringstream msg;
        msg << "truncated input at byte " << pos_ << " while reading '" << field << "' (need " << n
            << " bytes, " << bytes_.size() - pos_ << " left)";
        throw FormatError(msg.str());
    }
}

std::string BinaryReader::raw(std::size_t n, std::string_view field) {
    need(n, field);
    std::string out(bytes_.substr(pos_, n));
    pos_ += n;
    return out;
}

std::uint8_t BinaryReader::u8(std::string_view field) {
    need(1, field);
    return static_cast<std::uint8_t>(bytes_[pos_++]);
}

std::uint64_t BinaryReader::u64(std::string_view field) {
    need(8, field);
    std::uint64_t v;
    std::memcpy(&v, bytes_.data() + pos_, 8);
    pos_ += 8;
    return v;
}

double BinaryReader::f64(std::string_view field) { return std::bit_cast<double>(u64(field)); }

std::string BinaryReader::str(std::string_view field) {
    const auto n = u64(field);
    if (n > bytes_.size() - pos_) {
        std::ostringstream msg;
        msg << "string length " << n << " exceeds remaining input at byte " << pos_ << " in '" << field << "'";
        throw FormatError(msg.str());
    }
    return raw(static_cast<std::size_t>(n), field);
}

Tensor BinaryReader::tensor(std::string_view field) {
    const std::size_t start = pos_;
    const auto rank = u64(field);
    if (rank == 0 || rank > 8) {
        throw FormatError("invalid tensor rank " + std::to_string(rank) + " at byte " + std::to_string(start) +
                          " in '" + std::string(field) + "'");
    }
    Shape shape;
    std::size_t numel = 1;
    for (std::uint64_t i = 0; i < rank; ++i) {
        const auto d = u64(field);
        if (d == 0 || d > (1ULL << 32)) {
            throw FormatError("invalid extent at byte " + std::to_string(pos_ - 8) + " in '" + std::string(field) + "'");
        }
        shape.push_back(static_cast<std::size_t>(d));
        numel *= static_cast<std::size_t>(d);
    }
    need(numel * 8, field);
    std::vector<double> values(numel);
    std::memcpy(values.data(), bytes_.data() + pos_, numel * 8);
    pos_ += numel * 8;
    return Tensor(std::move(shape), std::move(values));
}

void BinaryReader::expect_end(std::string_view what) const {
    if (!at_end()) {
        throw FormatError(std::string(what) + ": " + std::to_string(bytes_.size() - pos_) +
                          " trailing bytes at byte " + std::to_string(pos_));
    }
}

void expect_magic(BinaryReader& reader, std::string_view expected) {
    const std::string got = reader.raw(expected.size(), "magic");
    if (got == expected) return;
    const auto prefix = expected.substr(0, expected.size() - 1);
    if (std::string_view(got).substr(0, prefix.size()) == prefix) {
        throw FormatError("version mismatch: file has " + got + ", this build reads " + std::string(expected));
    }
    throw FormatError("bad magic at byte 0: expected " + std::string(expected));
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file_atomic(const std::string& path, std::string_view bytes) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw std::runtime_error("write failed for " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

std::uint64_t fnv1a(std::string_view bytes) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace ganmex::io
