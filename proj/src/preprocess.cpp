#include "vrag/preprocess.hpp"

#include "vrag/embed.hpp"
#include "vrag/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>

namespace vrag {

SegmentationMask::SegmentationMask(int width, int height, std::string prompt)
    : width_(width), height_(height), prompt_(std::move(prompt)) {
    if (width < 0 || height < 0) throw SegmentationError("negative mask dimensions");
    bits_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), 0);
}

void SegmentationMask::fill_rect(const PixelBox& box, bool on) {
    for (int y = std::max(0, box.y); y < std::min(height_, box.y + box.height); ++y)
        for (int x = std::max(0, box.x); x < std::min(width_, box.x + box.width); ++x) set(x, y, on);
}

std::size_t SegmentationMask::area() const noexcept {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

std::optional<PixelBox> SegmentationMask::bounding_box() const {
    int x0 = width_, y0 = height_, x1 = -1, y1 = -1;
    for (int y = 0; y < height_; ++y)
        for (int x = 0; x < width_; ++x)
            if (at(x, y)) {
                x0 = std::min(x0, x);
                y0 = std::min(y0, y);
                x1 = std::max(x1, x);
                y1 = std::max(y1, y);
            }
    if (x1 < 0) return std::nullopt;
    return PixelBox{x0, y0, x1 - x0 + 1, y1 - y0 + 1};
}

std::string encode_mask_rle(const SegmentationMask& mask) {
    std::string out;
    bool current = false;
    std::size_t run = 0;
    auto flush = [&] {
        if (!out.empty()) out.push_back(' ');
        out += std::to_string(run);
    };
    for (int y = 0; y < mask.height(); ++y)
        for (int x = 0; x < mask.width(); ++x) {
            if (mask.at(x, y) != current) {
                flush();
                current = !current;
                run = 0;
            }
            ++run;
        }
    flush();
    return out;
}

SegmentationMask decode_mask_rle(std::string_view rle, int width, int height, std::string prompt) {
    SegmentationMask mask(width, height, std::move(prompt));
    const std::size_t total = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    std::size_t pos = 0;
    bool current = false;
    const char* p = rle.data();
    const char* end = rle.data() + rle.size();
    while (p < end) {
        if (*p == ' ') {
            ++p;
            continue;
        }
        std::size_t run = 0;
        auto [next, ec] = std::from_chars(p, end, run);
        if (ec != std::errc{}) throw SegmentationError("malformed mask_rle");
        p = next;
        if (run > total - pos) throw SegmentationError("mask_rle overruns the mask");
        if (current)
            for (std::size_t i = pos; i < pos + run; ++i)
                mask.set(static_cast<int>(i % static_cast<std::size_t>(width)), static_cast<int>(i / static_cast<std::size_t>(width)), true);
        pos += run;
        current = !current;
    }
    if (pos != total) throw SegmentationError("mask_rle covers " + std::to_string(pos) + " of " + std::to_string(total) + " pixels");
    return mask;
}

SegmentationMask StubSegmenter::segment(const Image& image, std::string_view prompt) const {
    SegmentationMask mask(image.width(), image.height(), std::string(prompt));
    int w = static_cast<int>(std::lround(image.width() * 0.6));
    int h = static_cast<int>(std::lround(image.height() * 0.6));
    mask.fill_rect({(image.width() - w) / 2, (image.height() - h) / 2, w, h});
    return mask;
}

RemoteSegmenter::RemoteSegmenter(std::shared_ptr<HttpTransport> transport, std::string url)
    : transport_(std::move(transport)), url_(std::move(url)) {
    if (!transport_) throw ConfigError("remote segmenter needs a transport");
}

SegmentationMask RemoteSegmenter::segment(const Image& image, std::string_view prompt) const {
    nlohmann::json body = {{"image", base64_encode(encode_png(image))}, {"prompt", std::string(prompt)}};
    HttpResponse response;
    try {
        response = transport_->post({url_, body.dump(), {}});
    } catch (const TransportError& e) {
        throw SegmentationError(std::string("segmentation service: ") + e.what());
    }
    if (response.status < 200 || response.status >= 300)
        throw SegmentationError("segmentation service returned HTTP " + std::to_string(response.status));
    auto j = nlohmann::json::parse(response.body, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("mask_rle") || !j["mask_rle"].is_string() ||
        !j.contains("width") || !j["width"].is_number_integer() || !j.contains("height") ||
        !j["height"].is_number_integer())
        throw SegmentationError("segmentation response needs mask_rle, width and height");
    int w = j["width"].get<int>(), h = j["height"].get<int>();
    if (w < 0 || h < 0) throw SegmentationError("segmentation response has negative dimensions");
    return decode_mask_rle(j["mask_rle"].get<std::string>(), w, h, std::string(prompt));
}

namespace {

void require_same_size(const Image& image, const SegmentationMask& mask) {
    if (image.width() != mask.width() || image.height() != mask.height())
        throw SegmentationError("mask is " + std::to_string(mask.width()) + "x" + std::to_string(mask.height()) +
                                ", image is " + std::to_string(image.width()) + "x" + std::to_string(image.height()));
}

} // namespace

SegmentationMask segment(const Segmenter& segmenter, const Image& image, std::string_view prompt) {
    if (image.empty()) throw SegmentationError("cannot segment an empty image");
    auto mask = segmenter.segment(image, prompt);
    require_same_size(image, mask);
    return mask;
}

Image crop_product(const Image& image, const SegmentationMask& mask) {
    require_same_size(image, mask);
    auto box = mask.bounding_box();
    if (!box) throw EmptyMask("segmentation mask is empty");
    Image out(box->width, box->height, kWhite);
    for (int y = 0; y < box->height; ++y)
        for (int x = 0; x < box->width; ++x)
            if (mask.at(box->x + x, box->y + y)) out.set(x, y, image.at(box->x + x, box->y + y));
    return out;
}

Image demask(const Image& image, const SegmentationMask& mask) {
    require_same_size(image, mask);
    Image out = image;
    for (int y = 0; y < image.height(); ++y)
        for (int x = 0; x < image.width(); ++x)
            if (mask.at(x, y)) out.set(x, y, kWhite);
    return out;
}

std::string extract_description(const Image& demasked_image, VlmClient& client, const std::string& item_id) {
    VlmRequest request;
    request.system = std::string(kExtractionSystemMessage);
    request.parts.push_back(PromptPart::make_image(PartRole::query_image, std::make_shared<Image>(demasked_image), item_id));
    request.parts.push_back(PromptPart::make_text(PartRole::instruction, std::string(kExtractionTask)));
    request.query_item_id = item_id;
    try {
        return client.send(request).content;
    } catch (const Error& e) {
        throw ExtractionError(std::string("description extraction failed: ") + e.what());
    }
}

PreprocessResult preprocess(const Image& image, const Segmenter& segmenter, VlmClient* client,
                            const std::string& item_id) {
    PreprocessResult result;
    auto mask = segment(segmenter, image);
    if (mask.empty()) {
        result.empty_mask = true;
        result.product_crop = image;
        result.demasked_image = image;
        result.extraction_error = "skipped: empty segmentation mask";
        return result;
    }
    result.product_crop = crop_product(image, mask);
    result.demasked_image = demask(image, mask);
    if (!client) {
        result.extraction_error = "skipped: no extraction client";
        return result;
    }
    try {
        result.description_text = extract_description(result.demasked_image, *client, item_id);
        if (normalize_text(result.description_text).empty()) {
            result.description_text.clear();
            result.extraction_error = "extraction returned no text";
        }
    } catch (const ExtractionError& e) {
        result.extraction_error = e.what();
    }
    return result;
}

} // namespace vrag
