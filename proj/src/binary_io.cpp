#include "simeck/binary_io.hpp"

#include <bit>
#include <cstring>
#include <system_error>

#include <zlib.h>

#include "simeck/errors.hpp"

namespace simeck::io {

namespace {

constexpr std::size_t kBufferSize = 1 << 20;

template <class T>
void put_le(std::uint8_t* out, T v)
{
    static_assert(std::is_unsigned_v<T>);
    for (std::size_t i = 0; i < sizeof(T); ++i)
        out[i] = static_cast<std::uint8_t>(v >> (8 * i));
}

template <class T>
T get_le(const std::uint8_t* in)
{
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
        v |= static_cast<T>(static_cast<T>(in[i]) << (8 * i));
    return v;
}

}  // namespace

std::uint32_t crc32(std::span<const std::uint8_t> bytes, std::uint32_t crc)
{
    uLong c = crc;
    // zlib takes uInt lengths; feed in bounded slices.
    while (!bytes.empty()) {
        const std::size_t n = std::min<std::size_t>(bytes.size(), 1U << 30);
        c = ::crc32(c, bytes.data(), static_cast<uInt>(n));
        bytes = bytes.subspan(n);
    }
    return static_cast<std::uint32_t>(c);
}

ChecksumWriter::ChecksumWriter(std::filesystem::path path)
    : path_(std::move(path)), tmp_(path_.string() + ".tmp")
{
    if (path_.has_parent_path() && !path_.parent_path().empty())
        std::filesystem::create_directories(path_.parent_path());
    out_.open(tmp_, std::ios::binary | std::ios::trunc);
    if (!out_)
        throw std::system_error(errno, std::generic_category(), "cannot open " + tmp_.string());
    buffer_.reserve(kBufferSize);
}

ChecksumWriter::~ChecksumWriter()
{
    if (!committed_) {
        out_.close();
        std::error_code ec;
        std::filesystem::remove(tmp_, ec);
    }
}

void ChecksumWriter::flush_buffer()
{
    if (buffer_.empty())
        return;
    crc_ = crc32(buffer_, crc_);
    out_.write(reinterpret_cast<const char*>(buffer_.data()), static_cast<std::streamsize>(buffer_.size()));
    if (!out_)
        throw std::system_error(errno, std::generic_category(), "write failed: " + tmp_.string());
    buffer_.clear();
}

void ChecksumWriter::bytes(std::span<const std::uint8_t> data)
{
    if (buffer_.size() + data.size() > kBufferSize)
        flush_buffer();
    if (data.size() > kBufferSize) {
        crc_ = crc32(data, crc_);
        out_.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
        return;
    }
    buffer_.insert(buffer_.end(), data.begin(), data.end());
}

void ChecksumWriter::magic(std::string_view four_cc)
{
    bytes({reinterpret_cast<const std::uint8_t*>(four_cc.data()), four_cc.size()});
}

void ChecksumWriter::u8(std::uint8_t v) { bytes({&v, 1}); }

void ChecksumWriter::u16(std::uint16_t v)
{
    std::uint8_t b[2];
    put_le(b, v);
    bytes(b);
}

void ChecksumWriter::u32(std::uint32_t v)
{
    std::uint8_t b[4];
    put_le(b, v);
    bytes(b);
}

void ChecksumWriter::u64(std::uint64_t v)
{
    std::uint8_t b[8];
    put_le(b, v);
    bytes(b);
}

void ChecksumWriter::f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
void ChecksumWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void ChecksumWriter::string(std::string_view s)
{
    u32(static_cast<std::uint32_t>(s.size()));
    bytes({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
}

void ChecksumWriter::commit()
{
    flush_buffer();
    std::uint8_t b[4];
    put_le(b, crc_);
    out_.write(reinterpret_cast<const char*>(b), 4);
    out_.close();
    if (!out_)
        throw std::system_error(errno, std::generic_category(), "write failed: " + tmp_.string());
    std::filesystem::rename(tmp_, path_);
    committed_ = true;
}

ChecksumReader::ChecksumReader(const std::filesystem::path& path) : path_(path)
{
    std::error_code ec;
    size_ = std::filesystem::file_size(path, ec);
    if (ec)
        throw std::system_error(ec, "cannot stat " + path.string());
    in_.open(path, std::ios::binary);
    if (!in_)
        throw std::system_error(errno, std::generic_category(), "cannot open " + path.string());
}

void ChecksumReader::bytes(std::span<std::uint8_t> out)
{
    if (out.size() > remaining())
        throw FormatError(path_.string() + ": truncated file");
    in_.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!in_)
        throw FormatError(path_.string() + ": read failed");
    consumed_ += out.size();
    crc_ = crc32(out, crc_);
}

void ChecksumReader::expect_magic(std::string_view four_cc)
{
    std::array<std::uint8_t, 4> m{};
    bytes(m);
    if (std::memcmp(m.data(), four_cc.data(), 4) != 0)
        throw FormatError(path_.string() + ": bad magic, expected " + std::string(four_cc));
}

std::uint8_t ChecksumReader::u8()
{
    std::uint8_t v;
    bytes({&v, 1});
    return v;
}

std::uint16_t ChecksumReader::u16()
{
    std::uint8_t b[2];
    bytes(b);
    return get_le<std::uint16_t>(b);
}

std::uint32_t ChecksumReader::u32()
{
    std::uint8_t b[4];
    bytes(b);
    return get_le<std::uint32_t>(b);
}

std::uint64_t ChecksumReader::u64()
{
    std::uint8_t b[8];
    bytes(b);
    return get_le<std::uint64_t>(b);
}

float ChecksumReader::f32() { return std::bit_cast<float>(u32()); }
double ChecksumReader::f64() { return std::bit_cast<double>(u64()); }

std::string ChecksumReader::string(std::size_t max_len)
{
    const std::uint32_t n = u32();
    if (n > max_len)
        throw FormatError(path_.string() + ": string length " + std::to_string(n) + " exceeds limit");
    std::string s(n, '\0');
    bytes({reinterpret_cast<std::uint8_t*>(s.data()), s.size()});
    return s;
}

void ChecksumReader::verify_trailer()
{
    const std::uint32_t expected = crc_;
    if (remaining() < 4)
        throw FormatError(path_.string() + ": missing checksum");
    std::uint8_t b[4];
    in_.read(reinterpret_cast<char*>(b), 4);
    consumed_ += 4;
    if (get_le<std::uint32_t>(b) != expected)
        throw FormatError(path_.string() + ": checksum mismatch");
    if (remaining() != 0)
        throw FormatError(path_.string() + ": trailing bytes after checksum");
}

}  // namespace simeck::io
