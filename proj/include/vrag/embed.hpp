#pragma once

#include "vrag/http.hpp"
#include "vrag/image.hpp"

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace vrag {

enum class Modality : std::uint8_t { image = 0, text = 1 };

std::string_view to_string(Modality m) noexcept;
/// Throws std::invalid_argument.
Modality parse_modality(std::string_view text);

struct EmbeddingVector {
    std::vector<double> values;
    Modality modality = Modality::image;

    std::size_t dimension() const noexcept { return values.size(); }
};

/// 1 - a.b / (|a| |b|), clamped to [0, 2]. Throws DimensionError.
double cosine_distance(std::span<const double> a, std::span<const double> b);
inline double cosine_distance(const EmbeddingVector& a, const EmbeddingVector& b) {
    return cosine_distance(a.values, b.values);
}

/// Scales to unit Euclidean norm in place. Throws EmbedError on a zero vector.
void l2_normalize(std::vector<double>& values);

/// Trims and collapses internal whitespace runs to one space.
std::string normalize_text(std::string_view text);

/// Maps images and texts into one D-dimensional space of unit vectors.
/// Implementations are stateless after construction and thread-safe.
class Embedder {
public:
    virtual ~Embedder() = default;
    virtual std::size_t dimension() const = 0;
    /// Throws EmbedError.
    virtual EmbeddingVector embed_image(const Image& image) const = 0;
    /// Input is normalized with normalize_text first. Throws EmbedError when empty.
    virtual EmbeddingVector embed_text(std::string_view text) const = 0;
};

/**
 * Deterministic embedder that needs no model weights.
 *
 * Images: per-channel 8-bin intensity histograms (fractions of pixels) and
 * the per-channel means of a 2x2 spatial grid, scaled to [0, 1]; 36 features
 * zero-padded to D. Texts: character trigrams of the normalized text, padded
 * with two spaces on each side, counted into D buckets by FNV-1a hash.
 * Both are L2-normalized.
 */
class ReferenceEmbedder final : public Embedder {
public:
    static constexpr std::size_t kImageFeatures = 36;

    /// Throws std::invalid_argument if dimension < kImageFeatures.
    explicit ReferenceEmbedder(std::size_t dimension = 64);

    std::size_t dimension() const override { return dimension_; }
    EmbeddingVector embed_image(const Image& image) const override;
    EmbeddingVector embed_text(std::string_view text) const override;

private:
    std::size_t dimension_;
};

/// Client for an embedding service.
///
/// POST {"modality": "image"|"text", "payload": base64 PNG | UTF-8 text}
/// expecting {"values": [...]} of the configured dimension. Returned vectors
/// are re-normalized to unit length.
class RemoteEmbedder final : public Embedder {
public:
    RemoteEmbedder(std::shared_ptr<HttpTransport> transport, std::string url, std::size_t dimension);

    std::size_t dimension() const override { return dimension_; }
    EmbeddingVector embed_image(const Image& image) const override;
    EmbeddingVector embed_text(std::string_view text) const override;

private:
    EmbeddingVector request(Modality modality, std::string payload) const;

    std::shared_ptr<HttpTransport> transport_;
    std::string url_;
    std::size_t dimension_;
};

} // namespace vrag
