#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace vrag {

struct Rgb {
    std::uint8_t r = 0, g = 0, b = 0;
    friend bool operator==(const Rgb&, const Rgb&) = default;
};

inline constexpr Rgb kWhite{255, 255, 255};

/// 8-bit RGB raster, row-major, no padding.
class Image {
public:
    Image() = default;
    Image(int width, int height, Rgb fill = {});

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    bool empty() const noexcept { return width_ == 0 || height_ == 0; }

    Rgb at(int x, int y) const noexcept {
        auto i = index(x, y);
        return {pixels_[i], pixels_[i + 1], pixels_[i + 2]};
    }
    void set(int x, int y, Rgb c) noexcept {
        auto i = index(x, y);
        pixels_[i] = c.r;
        pixels_[i + 1] = c.g;
        pixels_[i + 2] = c.b;
    }

    std::span<const std::uint8_t> bytes() const noexcept { return pixels_; }

    friend bool operator==(const Image&, const Image&) = default;

private:
    std::size_t index(int x, int y) const noexcept {
        return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x)) * 3;
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> pixels_;
};

/// PNG or JPEG, detected from the signature. Throws ImageError.
Image decode_image(std::span<const std::uint8_t> encoded);
Image load_image(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_png(const Image& image);
void save_png(const Image& image, const std::filesystem::path& path);

std::string base64_encode(std::span<const std::uint8_t> data);
/// Throws std::invalid_argument on malformed input.
std::vector<std::uint8_t> base64_decode(std::string_view text);

} // namespace vrag
