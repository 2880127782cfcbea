#include "vrag/embed.hpp"

#include "vrag/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <stdexcept>

namespace vrag {

std::string_view to_string(Modality m) noexcept { return m == Modality::image ? "image" : "text"; }

Modality parse_modality(std::string_view text) {
    if (text == "image") return Modality::image;
    if (text == "text") return Modality::text;
    throw std::invalid_argument("unknown modality \"" + std::string(text) + "\"");
}

double cosine_distance(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw DimensionError("dimension mismatch: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0 || nb == 0) return 1.0;
    return std::clamp(1.0 - dot / (std::sqrt(na) * std::sqrt(nb)), 0.0, 2.0);
}

void l2_normalize(std::vector<double>& values) {
    double norm = 0;
    for (double v : values) norm += v * v;
    norm = std::sqrt(norm);
    if (!(norm > 0) || !std::isfinite(norm)) throw EmbedError("cannot normalize a zero or non-finite vector");
    for (double& v : values) v /= norm;
}

std::string normalize_text(std::string_view text) {
    std::string out;
    bool pending_space = false;
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) out.push_back(' ');
        pending_space = false;
        out.push_back(c);
    }
    return out;
}

ReferenceEmbedder::ReferenceEmbedder(std::size_t dimension) : dimension_(dimension) {
    if (dimension < kImageFeatures)
        throw std::invalid_argument("reference embedder needs dimension >= " + std::to_string(kImageFeatures));
}

EmbeddingVector ReferenceEmbedder::embed_image(const Image& image) const {
    if (image.empty()) throw EmbedError("cannot embed an empty image");
    std::vector<double> v(dimension_, 0.0);
    const int w = image.width(), h = image.height();
    double cell_count[4] = {0, 0, 0, 0};
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            Rgb p = image.at(x, y);
            const std::uint8_t ch[3] = {p.r, p.g, p.b};
            int cell = (y * 2 / h) * 2 + (x * 2 / w);
            cell_count[cell] += 1;
            for (int c = 0; c < 3; ++c) {
                v[static_cast<std::size_t>(c * 8 + ch[c] / 32)] += 1;
                v[static_cast<std::size_t>(24 + cell * 3 + c)] += ch[c] / 255.0;
            }
        }
    }
    const double n = static_cast<double>(w) * h;
    for (std::size_t i = 0; i < 24; ++i) v[i] /= n;
    for (int cell = 0; cell < 4; ++cell)
        for (int c = 0; c < 3; ++c)
            if (cell_count[cell] > 0) v[static_cast<std::size_t>(24 + cell * 3 + c)] /= cell_count[cell];
    l2_normalize(v);
    return {std::move(v), Modality::image};
}

EmbeddingVector ReferenceEmbedder::embed_text(std::string_view text) const {
    auto normalized = normalize_text(text);
    if (normalized.empty()) throw EmbedError("cannot embed empty text");
    std::string padded = "  " + normalized + "  ";
    std::vector<double> v(dimension_, 0.0);
    for (std::size_t i = 0; i + 3 <= padded.size(); ++i) {
        std::uint64_t hash = 14695981039346656037ull;
        for (std::size_t k = i; k < i + 3; ++k) {
            hash ^= static_cast<unsigned char>(padded[k]);
            hash *= 1099511628211ull;
        }
        v[hash % dimension_] += 1;
    }
    l2_normalize(v);
    return {std::move(v), Modality::text};
}

RemoteEmbedder::RemoteEmbedder(std::shared_ptr<HttpTransport> transport, std::string url, std::size_t dimension)
    : transport_(std::move(transport)), url_(std::move(url)), dimension_(dimension) {
    if (!transport_) throw ConfigError("remote embedder needs a transport");
}

EmbeddingVector RemoteEmbedder::embed_image(const Image& image) const {
    if (image.empty()) throw EmbedError("cannot embed an empty image");
    return request(Modality::image, base64_encode(encode_png(image)));
}

EmbeddingVector RemoteEmbedder::embed_text(std::string_view text) const {
    auto normalized = normalize_text(text);
    if (normalized.empty()) throw EmbedError("cannot embed empty text");
    return request(Modality::text, std::move(normalized));
}

EmbeddingVector RemoteEmbedder::request(Modality modality, std::string payload) const {
    nlohmann::json body = {{"modality", std::string(to_string(modality))}, {"payload", std::move(payload)}};
    HttpResponse response;
    try {
        response = transport_->post({url_, body.dump(), {}});
    } catch (const TransportError& e) {
        throw EmbedError(std::string("embedding service: ") + e.what());
    }
    if (response.status < 200 || response.status >= 300)
        throw EmbedError("embedding service returned HTTP " + std::to_string(response.status));
    auto j = nlohmann::json::parse(response.body, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("values") || !j["values"].is_array())
        throw EmbedError("embedding service response lacks \"values\"");
    std::vector<double> values;
    values.reserve(j["values"].size());
    for (const auto& e : j["values"]) {
        if (!e.is_number()) throw EmbedError("embedding service returned a non-numeric value");
        values.push_back(e.get<double>());
    }
    if (values.size() != dimension_)
        throw DimensionError("embedding service returned dimension " + std::to_string(values.size()) + ", expected " +
                             std::to_string(dimension_));
    l2_normalize(values);
    return {std::move(values), modality};
}

} // namespace vrag
