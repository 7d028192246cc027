#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace zsl::binio {

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian; big-endian hosts are unsupported");

inline void write_f32(const std::string& path, const std::vector<double>& values) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    std::vector<float> buf(values.begin(), values.end());
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!out) throw std::runtime_error("write failed: " + path);
}

inline std::vector<double> read_f32(const std::string& path, std::size_t expected_count) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw std::runtime_error("cannot open: " + path);
    const auto bytes = static_cast<std::size_t>(in.tellg());
    if (bytes != expected_count * sizeof(float)) {
        throw std::runtime_error(path + ": expected " + std::to_string(expected_count) +
                                 " float32 values, file holds " +
                                 std::to_string(bytes / sizeof(float)));
    }
    in.seekg(0);
    std::vector<float> buf(expected_count);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(bytes));
    if (!in) throw std::runtime_error("read failed: " + path);
    return std::vector<double>(buf.begin(), buf.end());
}

inline void write_u32(const std::string& path, const std::vector<std::uint32_t>& values) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size() * sizeof(std::uint32_t)));
    if (!out) throw std::runtime_error("write failed: " + path);
}

inline std::vector<std::uint32_t> read_u32(const std::string& path, std::size_t expected_count) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw std::runtime_error("cannot open: " + path);
    const auto bytes = static_cast<std::size_t>(in.tellg());
    if (bytes != expected_count * sizeof(std::uint32_t)) {
        throw std::runtime_error(path + ": expected " + std::to_string(expected_count) +
                                 " uint32 values, file holds " +
                                 std::to_string(bytes / sizeof(std::uint32_t)));
    }
    in.seekg(0);
    std::vector<std::uint32_t> buf(expected_count);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(bytes));
    if (!in) throw std::runtime_error("read failed: " + path);
    return buf;
}

inline void write_f64(std::ofstream& out, const std::vector<double>& values) {
    std::uint64_t n = values.size();
    out.write(reinterpret_cast<const char*>(&n), sizeof(n));
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size() * sizeof(double)));
}

inline std::vector<double> read_f64(std::ifstream& in) {
    std::uint64_t n = 0;
    in.read(reinterpret_cast<char*>(&n), sizeof(n));
    std::vector<double> buf(n);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (!in) throw std::runtime_error("truncated binary payload");
    return buf;
}

}  // namespace zsl::binio
