#pragma once

#include "vrag/http.hpp"
#include "vrag/image.hpp"
#include "vrag/vlm.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace vrag {

inline constexpr std::string_view kSegmentationPrompt = "product.";
inline constexpr std::string_view kExtractionSystemMessage = "You are an AI assistant that extract text from an image";
inline constexpr std::string_view kExtractionTask =
    "First, extract the text. Second, remove all price information. If available, remove all special / detailed "
    "description of the product";

struct PixelBox {
    int x = 0, y = 0, width = 0, height = 0;
    friend bool operator==(const PixelBox&, const PixelBox&) = default;
};

/// Per-pixel product mask. An all-false mask is a valid value: segmentation
/// found nothing, which callers handle rather than treat as a crash.
class SegmentationMask {
public:
    SegmentationMask() = default;
    SegmentationMask(int width, int height, std::string prompt = {});

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    const std::string& prompt() const noexcept { return prompt_; }

    bool at(int x, int y) const noexcept { return bits_[index(x, y)] != 0; }
    void set(int x, int y, bool on) noexcept { bits_[index(x, y)] = on ? 1 : 0; }
    void fill_rect(const PixelBox& box, bool on = true);

    std::size_t area() const noexcept;
    bool empty() const noexcept { return area() == 0; }
    /// Tight bounding box; std::nullopt for an empty mask.
    std::optional<PixelBox> bounding_box() const;

    friend bool operator==(const SegmentationMask&, const SegmentationMask&) = default;

private:
    std::size_t index(int x, int y) const noexcept {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> bits_;
    std::string prompt_;
};

/// Run lengths over the row-major bitmap, space separated, alternating
/// false/true and starting with false (the first run may be 0).
std::string encode_mask_rle(const SegmentationMask& mask);
/// Throws SegmentationError when the runs do not cover width*height exactly.
SegmentationMask decode_mask_rle(std::string_view rle, int width, int height, std::string prompt = {});

class Segmenter {
public:
    virtual ~Segmenter() = default;
    /// Throws SegmentationError.
    virtual SegmentationMask segment(const Image& image, std::string_view prompt) const = 0;
};

/// Centered rectangle spanning 60% of each dimension (rounded).
class StubSegmenter final : public Segmenter {
public:
    SegmentationMask segment(const Image& image, std::string_view prompt) const override;
};

/// POST {"image": base64 PNG, "prompt"} -> {"mask_rle", "width", "height"}.
class RemoteSegmenter final : public Segmenter {
public:
    RemoteSegmenter(std::shared_ptr<HttpTransport> transport, std::string url);
    SegmentationMask segment(const Image& image, std::string_view prompt) const override;

private:
    std::shared_ptr<HttpTransport> transport_;
    std::string url_;
};

/// Runs the segmenter and checks its mask against the image size.
/// Throws SegmentationError (client failure or size mismatch).
SegmentationMask segment(const Segmenter& segmenter, const Image& image, std::string_view prompt = kSegmentationPrompt);

/// Clip to the mask's bounding box; pixels outside the mask become white.
/// Throws EmptyMask, or SegmentationError on a size mismatch.
Image crop_product(const Image& image, const SegmentationMask& mask);

/// Same-size copy with the mask's pixels set to white.
/// Throws SegmentationError on a size mismatch.
Image demask(const Image& image, const SegmentationMask& mask);

/// Sends the fixed extraction prompt with the demasked image and returns the
/// model's text. Throws ExtractionError.
std::string extract_description(const Image& demasked_image, VlmClient& client, const std::string& item_id = {});

struct PreprocessResult {
    Image product_crop;
    Image demasked_image;
    std::string description_text;
    bool empty_mask = false;
    /// Why description_text is empty, when it is.
    std::optional<std::string> extraction_error;
};

/// segment -> crop_product -> demask -> extract_description.
/// An empty mask yields the full image as the crop and skips extraction.
/// With no client, extraction is skipped and recorded.
PreprocessResult preprocess(const Image& image, const Segmenter& segmenter, VlmClient* client,
                            const std::string& item_id = {});

} // namespace vrag
