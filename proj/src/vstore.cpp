#include "vrag/vstore.hpp"

#include "vrag/errors.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <mutex>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

namespace vrag {

namespace {

constexpr char kMagic[4] = {'V', 'R', 'V', 'S'};

double row_distance(const float* q, const float* row, std::size_t d) {
    double dot = 0, nq = 0, nr = 0;
    for (std::size_t i = 0; i < d; ++i) {
        const double a = q[i], b = row[i];
        dot += a * b;
        nq += a * a;
        nr += b * b;
    }
    if (nq == 0 || nr == 0) return 1.0;
    return std::clamp(1.0 - dot / (std::sqrt(nq) * std::sqrt(nr)), 0.0, 2.0);
}

class Writer {
public:
    void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        buf_.append(s);
    }
    void raw(const char* p, std::size_t n) { buf_.append(p, n); }
    const std::string& data() const { return buf_; }

private:
    std::string buf_;
};

class Reader {
public:
    explicit Reader(const std::string& data) : data_(data) {}

    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(data_[pos_++]);
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(data_[pos_++])) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(data_[pos_++])) << (8 * i);
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    std::string str() {
        auto n = u32();
        need(n);
        std::string s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    bool at_end() const { return pos_ == data_.size(); }
    std::size_t remaining() const { return data_.size() - pos_; }

private:
    void need(std::size_t n) const {
        if (data_.size() - pos_ < n) throw SnapshotError("snapshot truncated at byte " + std::to_string(pos_));
    }

    const std::string& data_;
    std::size_t pos_ = 0;
};

} // namespace

VectorStore::VectorStore(VectorStore&& other) noexcept {
    std::unique_lock lock(other.mutex_);
    dimension_ = other.dimension_;
    rows_ = std::move(other.rows_);
    meta_ = std::move(other.meta_);
    next_id_ = other.next_id_;
}

VectorStore& VectorStore::operator=(VectorStore&& other) noexcept {
    if (this != &other) {
        std::scoped_lock lock(mutex_, other.mutex_);
        dimension_ = other.dimension_;
        rows_ = std::move(other.rows_);
        meta_ = std::move(other.meta_);
        next_id_ = other.next_id_;
    }
    return *this;
}

std::uint64_t VectorStore::add(const EmbeddingVector& vector, std::string label, std::string item_id) {
    if (label.empty() || item_id.empty()) throw std::invalid_argument("stored embeddings need a label and an item_id");
    if (vector.values.empty()) throw DimensionError("cannot store an empty vector");
    auto unit = vector.values;
    l2_normalize(unit);

    std::unique_lock lock(mutex_);
    if (dimension_ == 0) dimension_ = unit.size();
    if (unit.size() != dimension_)
        throw DimensionError("store dimension is " + std::to_string(dimension_) + ", vector has " +
                             std::to_string(unit.size()));
    for (double v : unit) rows_.push_back(static_cast<float>(v));
    std::uint64_t id = next_id_++;
    meta_.push_back({id, std::move(label), std::move(item_id), vector.modality});
    return id;
}

std::vector<RetrievalHit> VectorStore::search_topk(const EmbeddingVector& query, std::size_t k) const {
    if (k == 0) throw std::invalid_argument("k must be positive");
    std::shared_lock lock(mutex_);
    if (meta_.empty()) throw EmptyStore("search on an empty vector store");
    if (query.values.size() != dimension_)
        throw DimensionError("query dimension " + std::to_string(query.values.size()) + " != store dimension " +
                             std::to_string(dimension_));

    std::vector<float> q(query.values.begin(), query.values.end());
    const std::size_t n = meta_.size();
    std::vector<double> dist(n);
    for (std::size_t i = 0; i < n; ++i) dist[i] = row_distance(q.data(), rows_.data() + i * dimension_, dimension_);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto closer = [&](std::size_t a, std::size_t b) {
        if (dist[a] != dist[b]) return dist[a] < dist[b];
        return meta_[a].store_id < meta_[b].store_id;
    };
    k = std::min(k, n);
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), closer);

    std::vector<RetrievalHit> hits;
    hits.reserve(k);
    for (std::size_t r = 0; r < k; ++r) {
        const auto& m = meta_[order[r]];
        hits.push_back({m.store_id, m.label, m.item_id, m.modality, dist[order[r]]});
    }
    return hits;
}

std::size_t VectorStore::size() const {
    std::shared_lock lock(mutex_);
    return meta_.size();
}

std::size_t VectorStore::dimension() const {
    std::shared_lock lock(mutex_);
    return dimension_;
}

std::size_t VectorStore::count(Modality modality) const {
    std::shared_lock lock(mutex_);
    return static_cast<std::size_t>(
        std::count_if(meta_.begin(), meta_.end(), [&](const Meta& m) { return m.modality == modality; }));
}

std::vector<StoredEmbedding> VectorStore::records() const {
    std::shared_lock lock(mutex_);
    std::vector<StoredEmbedding> out;
    out.reserve(meta_.size());
    for (std::size_t i = 0; i < meta_.size(); ++i) {
        const auto* row = rows_.data() + i * dimension_;
        out.push_back({meta_[i].store_id, meta_[i].label, meta_[i].item_id, meta_[i].modality,
                       std::vector<float>(row, row + dimension_)});
    }
    return out;
}

void VectorStore::snapshot(const std::filesystem::path& path) const {
    Writer w;
    {
        std::shared_lock lock(mutex_);
        w.raw(kMagic, sizeof kMagic);
        w.u32(kSnapshotVersion);
        w.u32(static_cast<std::uint32_t>(dimension_));
        w.u64(meta_.size());
        for (std::size_t i = 0; i < meta_.size(); ++i) {
            w.u64(meta_[i].store_id);
            w.str(meta_[i].label);
            w.str(meta_[i].item_id);
            w.u8(static_cast<std::uint8_t>(meta_[i].modality));
            for (std::size_t d = 0; d < dimension_; ++d) w.f32(rows_[i * dimension_ + d]);
        }
    }
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out.write(w.data().data(), static_cast<std::streamsize>(w.data().size()));
        if (!out) throw SnapshotError("cannot write snapshot " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw SnapshotError("cannot move snapshot into place: " + ec.message());
}

VectorStore VectorStore::restore(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw SnapshotError("cannot open snapshot " + path.string());
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    Reader r(data);
    char magic[4];
    for (char& c : magic) c = static_cast<char>(r.u8());
    if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw SnapshotError("not a vector store snapshot");
    auto version = r.u32();
    if (version != kSnapshotVersion)
        throw SnapshotError("snapshot version " + std::to_string(version) + " is not supported");
    VectorStore store(r.u32());
    auto count = r.u64();
    if (count > 0 && store.dimension_ == 0) throw SnapshotError("snapshot has records but dimension 0");
    // Each record needs at least 17 + 4*D bytes; reject absurd counts before allocating.
    if (count > r.remaining() / (17 + 4 * std::max<std::size_t>(store.dimension_, 1)))
        throw SnapshotError("snapshot truncated: record count exceeds file size");

    std::unordered_set<std::uint64_t> ids;
    store.rows_.reserve(count * store.dimension_);
    store.meta_.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        Meta m;
        m.store_id = r.u64();
        m.label = r.str();
        m.item_id = r.str();
        auto modality = r.u8();
        if (modality > 1) throw SnapshotError("corrupt modality byte in record " + std::to_string(i));
        m.modality = static_cast<Modality>(modality);
        if (m.label.empty() || m.item_id.empty()) throw SnapshotError("record " + std::to_string(i) + " lacks metadata");
        if (!ids.insert(m.store_id).second) throw SnapshotError("duplicate store_id " + std::to_string(m.store_id));
        for (std::size_t d = 0; d < store.dimension_; ++d) {
            float v = r.f32();
            if (!std::isfinite(v)) throw SnapshotError("non-finite value in record " + std::to_string(i));
            store.rows_.push_back(v);
        }
        store.next_id_ = std::max(store.next_id_, m.store_id + 1);
        store.meta_.push_back(std::move(m));
    }
    if (!r.at_end()) throw SnapshotError("trailing bytes after the last record");
    return store;
}

std::vector<RetrievalHit> filter_by_label(std::span<const RetrievalHit> hits, std::string_view label) {
    std::vector<RetrievalHit> out;
    std::copy_if(hits.begin(), hits.end(), std::back_inserter(out), [&](const RetrievalHit& h) { return h.label == label; });
    return out;
}

} // namespace vrag
