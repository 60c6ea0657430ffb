#pragma once

#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <initializer_list>
#include <stdexcept>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

namespace testutil {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(std::string_view tag = "ercfuse") {
        std::string pattern = (std::filesystem::temp_directory_path() / (std::string(tag) + "-XXXXXX")).string();
        if (::mkdtemp(pattern.data()) == nullptr) {
            throw std::runtime_error("mkdtemp failed");
        }
        path_ = pattern;
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

private:
    std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& p, std::string_view content) {
    std::filesystem::create_directories(p.parent_path());
    std::ofstream f(p, std::ios::binary);
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
}

inline void write_bytes(const std::filesystem::path& p, const std::vector<std::uint8_t>& bytes) {
    write_file(p, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

// Hand-rolled RIFF builder, independent of the library encoder.
class WavBuilder {
public:
    WavBuilder(std::uint16_t format, std::uint16_t channels, std::uint32_t rate, std::uint16_t bits)
        : format_(format), channels_(channels), rate_(rate), bits_(bits) {}

    WavBuilder& pcm16(std::initializer_list<std::int16_t> samples) {
        for (auto s : samples) {
            put16(data_, static_cast<std::uint16_t>(s));
        }
        return *this;
    }
    WavBuilder& float32(std::initializer_list<float> samples) {
        for (float s : samples) {
            std::uint32_t u;
            std::memcpy(&u, &s, 4);
            put32(data_, u);
        }
        return *this;
    }
    WavBuilder& raw(std::initializer_list<std::uint8_t> bytes) {
        data_.insert(data_.end(), bytes.begin(), bytes.end());
        return *this;
    }
    // Declared data size larger than the payload.
    WavBuilder& claim_extra(std::uint32_t n) {
        extra_ = n;
        return *this;
    }
    WavBuilder& extensible(std::uint16_t sub_format) {
        extensible_ = true;
        sub_format_ = sub_format;
        return *this;
    }

    std::vector<std::uint8_t> bytes() const {
        std::vector<std::uint8_t> fmt;
        put16(fmt, extensible_ ? 0xFFFE : format_);
        put16(fmt, channels_);
        put32(fmt, rate_);
        put32(fmt, rate_ * channels_ * bits_ / 8);
        put16(fmt, static_cast<std::uint16_t>(channels_ * bits_ / 8));
        put16(fmt, bits_);
        if (extensible_) {
            put16(fmt, 22);
            put16(fmt, bits_);
            put32(fmt, 0);
            put16(fmt, sub_format_);
            const std::uint8_t guid_tail[14] = {0x00, 0x00, 0x00, 0x00, 0x10, 0x00, 0x80,
                                                0x00, 0x00, 0xAA, 0x00, 0x38, 0x9B, 0x71};
            fmt.insert(fmt.end(), guid_tail, guid_tail + 14);
        }
        std::vector<std::uint8_t> out{'R', 'I', 'F', 'F'};
        put32(out, static_cast<std::uint32_t>(4 + 8 + fmt.size() + 8 + data_.size()));
        out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
        put32(out, static_cast<std::uint32_t>(fmt.size()));
        out.insert(out.end(), fmt.begin(), fmt.end());
        out.insert(out.end(), {'d', 'a', 't', 'a'});
        put32(out, static_cast<std::uint32_t>(data_.size() + extra_));
        out.insert(out.end(), data_.begin(), data_.end());
        return out;
    }

private:
    static void put16(std::vector<std::uint8_t>& v, std::uint16_t x) {
        v.push_back(static_cast<std::uint8_t>(x & 0xFF));
        v.push_back(static_cast<std::uint8_t>(x >> 8));
    }
    static void put32(std::vector<std::uint8_t>& v, std::uint32_t x) {
        for (int i = 0; i < 4; ++i) {
            v.push_back(static_cast<std::uint8_t>((x >> (8 * i)) & 0xFF));
        }
    }

    std::uint16_t format_;
    std::uint16_t channels_;
    std::uint32_t rate_;
    std::uint16_t bits_;
    std::vector<std::uint8_t> data_;
    std::uint32_t extra_ = 0;
    bool extensible_ = false;
    std::uint16_t sub_format_ = 1;
};

}  // namespace testutil
