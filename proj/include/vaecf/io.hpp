#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vaecf/error.hpp"

namespace vaecf::io {

static_assert(std::endian::native == std::endian::little,
              "binary formats are written with native little-endian stores");

/// Append-only little-endian byte buffer.
class ByteWriter {
public:
    template <typename T>
    void put(T value) {
        static_assert(std::is_trivially_copyable_v<T>);
        const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
        bytes_.insert(bytes_.end(), p, p + sizeof(T));
    }

    template <typename T>
    void put_array(std::span<const T> values) {
        static_assert(std::is_trivially_copyable_v<T>);
        const auto* p = reinterpret_cast<const std::uint8_t*>(values.data());
        bytes_.insert(bytes_.end(), p, p + values.size_bytes());
    }

    void put_raw(std::string_view raw) { bytes_.insert(bytes_.end(), raw.begin(), raw.end()); }

    /// u64 length followed by the UTF-8 bytes.
    void put_string(std::string_view s) {
        put<std::uint64_t>(s.size());
        put_raw(s);
    }

    /// u64 count followed by put_string for each entry.
    void put_string_table(std::span<const std::string> table) {
        put<std::uint64_t>(table.size());
        for (const auto& s : table) put_string(s);
    }

    const std::vector<std::uint8_t>& bytes() const { return bytes_; }
    std::vector<std::uint8_t>& bytes() { return bytes_; }

private:
    std::vector<std::uint8_t> bytes_;
};

/// Bounds-checked cursor over a byte buffer; every overrun is a DataError.
class ByteReader {
public:
    ByteReader(std::span<const std::uint8_t> bytes, std::string source)
        : bytes_(bytes), source_(std::move(source)) {}

    template <typename T>
    T get() {
        static_assert(std::is_trivially_copyable_v<T>);
        require(sizeof(T));
        T value;
        std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return value;
    }

    template <typename T>
    std::vector<T> get_array(std::uint64_t count) {
        if (count > remaining() / sizeof(T)) fail("array length exceeds file size");
        std::vector<T> values(count);
        std::memcpy(values.data(), bytes_.data() + pos_, count * sizeof(T));
        pos_ += count * sizeof(T);
        return values;
    }

    std::string get_raw(std::size_t n) {
        require(n);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }

    std::string get_string() {
        const auto n = get<std::uint64_t>();
        if (n > remaining()) fail("string length exceeds file size");
        return get_raw(static_cast<std::size_t>(n));
    }

    std::vector<std::string> get_string_table() {
        const auto n = get<std::uint64_t>();
        // Each entry carries at least an 8-byte length prefix.
        if (n > remaining() / 8) fail("string table length exceeds file size");
        std::vector<std::string> table;
        table.reserve(n);
        for (std::uint64_t i = 0; i < n; ++i) table.push_back(get_string());
        return table;
    }

    std::size_t position() const { return pos_; }
    std::size_t remaining() const { return bytes_.size() - pos_; }

    [[noreturn]] void fail(const std::string& what) const {
        throw DataError(source_ + ": " + what + " (offset " + std::to_string(pos_) + ")");
    }

private:
    void require(std::size_t n) const {
        if (n > remaining()) fail("unexpected end of file");
    }

    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
    std::string source_;
};

std::uint32_t crc32(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

/// Writes to a sibling temporary file and renames it over `path`, so readers
/// never observe a partially written file.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_file_atomic(const std::filesystem::path& path, std::string_view text);

}  // namespace vaecf::io
