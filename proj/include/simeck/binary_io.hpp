// Little-endian binary files with a trailing CRC32 over every preceding byte.
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace simeck::io {

std::uint32_t crc32(std::span<const std::uint8_t> bytes, std::uint32_t crc = 0);

/// Writes to `path.tmp` and renames over `path` on commit().
class ChecksumWriter {
public:
    explicit ChecksumWriter(std::filesystem::path path);
    ~ChecksumWriter();
    ChecksumWriter(const ChecksumWriter&) = delete;
    ChecksumWriter& operator=(const ChecksumWriter&) = delete;

    void bytes(std::span<const std::uint8_t> data);
    void magic(std::string_view four_cc);
    void u8(std::uint8_t v);
    void u16(std::uint16_t v);
    void u32(std::uint32_t v);
    void u64(std::uint64_t v);
    void f32(float v);
    void f64(double v);
    void string(std::string_view s);

    /// Appends the CRC, flushes, and atomically moves the file into place.
    void commit();

private:
    void flush_buffer();

    std::filesystem::path path_;
    std::filesystem::path tmp_;
    std::ofstream out_;
    std::vector<std::uint8_t> buffer_;
    std::uint32_t crc_ = 0;
    bool committed_ = false;
};

/// Streams a file, tracking the CRC; every short read throws FormatError.
class ChecksumReader {
public:
    explicit ChecksumReader(const std::filesystem::path& path);

    void bytes(std::span<std::uint8_t> out);
    /// Throws FormatError unless the next four bytes equal `four_cc`.
    void expect_magic(std::string_view four_cc);
    std::uint8_t u8();
    std::uint16_t u16();
    std::uint32_t u32();
    std::uint64_t u64();
    float f32();
    double f64();
    std::string string(std::size_t max_len = 4096);

    /// Reads the trailing CRC, checks it, and requires end of file.
    void verify_trailer();

    std::uint64_t remaining() const noexcept { return size_ - consumed_; }

private:
    std::filesystem::path path_;
    std::ifstream in_;
    std::uint64_t size_ = 0;
    std::uint64_t consumed_ = 0;
    std::uint32_t crc_ = 0;
};

}  // namespace simeck::io
