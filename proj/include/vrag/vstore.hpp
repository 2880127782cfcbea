#pragma once

#include "vrag/embed.hpp"

#include <cstdint>
#include <filesystem>
#include <shared_mutex>
#include <span>
#include <string>
#include <vector>

namespace vrag {

struct StoredEmbedding {
    std::uint64_t store_id = 0;
    std::string label;
    std::string item_id;
    Modality modality = Modality::image;
    /// Exactly the float32 values the store holds.
    std::vector<float> vector;
};

struct RetrievalHit {
    std::uint64_t store_id = 0;
    std::string label;
    std::string item_id;
    Modality modality = Modality::image;
    double distance = 0;

    friend bool operator==(const RetrievalHit&, const RetrievalHit&) = default;
};

/**
 * Exact cosine-distance vector store with class-label metadata.
 *
 * Rows are unit-normalized on insert and held as float32. Queries are
 * quantized to float32 before scoring, so a stored vector queried with
 * itself scores (numerically) zero and results survive a snapshot round
 * trip bit for bit. Search is a full scan; ties are ordered by store_id.
 *
 * Reads run concurrently; add() takes exclusive access.
 */
class VectorStore {
public:
    static constexpr std::uint32_t kSnapshotVersion = 1;

    /// dimension 0 means "fixed by the first insert".
    explicit VectorStore(std::size_t dimension = 0) : dimension_(dimension) {}

    VectorStore(const VectorStore&) = delete;
    VectorStore& operator=(const VectorStore&) = delete;
    VectorStore(VectorStore&& other) noexcept;
    VectorStore& operator=(VectorStore&& other) noexcept;

    /// Throws DimensionError, or std::invalid_argument for empty label/item_id.
    std::uint64_t add(const EmbeddingVector& vector, std::string label, std::string item_id);

    /// Hits sorted by (distance, store_id), length min(k, size()).
    /// Throws EmptyStore, DimensionError, or std::invalid_argument when k == 0.
    std::vector<RetrievalHit> search_topk(const EmbeddingVector& query, std::size_t k) const;

    std::size_t size() const;
    std::size_t dimension() const;
    std::size_t count(Modality modality) const;
    /// Copy of every record in insertion order.
    std::vector<StoredEmbedding> records() const;

    /// Writes the versioned binary snapshot (little-endian). Throws SnapshotError.
    void snapshot(const std::filesystem::path& path) const;
    /// Throws SnapshotError on I/O failure, bad magic/version, or corruption.
    static VectorStore restore(const std::filesystem::path& path);

private:
    struct Meta {
        std::uint64_t store_id;
        std::string label;
        std::string item_id;
        Modality modality;
    };

    mutable std::shared_mutex mutex_;
    std::size_t dimension_ = 0;
    std::vector<float> rows_;
    std::vector<Meta> meta_;
    std::uint64_t next_id_ = 0;
};

/// Hits whose label equals `label`, order preserved.
std::vector<RetrievalHit> filter_by_label(std::span<const RetrievalHit> hits, std::string_view label);

} // namespace vrag
