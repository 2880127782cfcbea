#pragma once

#include "vrag/records.hpp"

#include <cstddef>
#include <deque>
#include <filesystem>
#include <istream>
#include <map>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace vrag {

enum class Split { train, test };

std::string_view to_string(Split s) noexcept;

struct DatasetItem {
    std::string item_id;
    std::filesystem::path image_path;
    Split split = Split::train;
    std::string label;
    ProductRecord product;
    PromotionRecord promotion;
};

struct DatasetStats {
    std::size_t n_items = 0;
    std::size_t n_train = 0;
    std::size_t n_test = 0;
    std::size_t n_classes = 0;
    std::map<std::string, std::size_t> per_class_train;
    std::map<std::string, std::size_t> per_class_test;

    friend bool operator==(const DatasetStats&, const DatasetStats&) = default;
};

/**
 * Relational store of dataset items keyed by class label.
 *
 * Items are held in ingest order and never move, so references returned by
 * the query functions stay valid for the lifetime of the dataset. After
 * ingest the dataset is read-only and may be shared across threads.
 */
class Dataset {
public:
    struct IngestOptions {
        /// Reject items whose image file does not exist.
        bool require_images = true;
    };

    /// Replaces the contents with the items of a JSONL manifest. Relative
    /// image paths resolve against the manifest's directory. On any error
    /// the dataset is left unchanged.
    DatasetStats ingest_manifest(const std::filesystem::path& manifest, IngestOptions options);
    DatasetStats ingest_manifest(const std::filesystem::path& manifest) { return ingest_manifest(manifest, {}); }

    /// Same, reading lines from a stream.
    DatasetStats ingest_stream(std::istream& in, const std::filesystem::path& base_dir, IngestOptions options);

    /// Appends one item. Throws DuplicateItem.
    void add_item(DatasetItem item);

    DatasetStats stats() const;

    const std::deque<DatasetItem>& items() const noexcept { return items_; }
    /// nullptr when absent.
    const DatasetItem* find(std::string_view item_id) const;
    bool has_label(std::string_view label) const;
    /// Labels in order of first appearance.
    const std::vector<std::string>& labels() const noexcept { return label_order_; }

    std::vector<const DatasetItem*> test_items() const;

    /// Train items of `label`. Items named in `order` come first in that
    /// order; the rest follow in ingest order. Ids in `order` that are not
    /// train items of the label are ignored. Throws UnknownLabel.
    std::vector<const DatasetItem*> relational_query(std::string_view label,
                                                     std::span<const std::string> order = {}) const;

    /// Union of the GTIN lists of every item (train and test) of `label`.
    std::set<Gtin> class_gtin_union(std::string_view label) const;

private:
    struct LabelEntry {
        std::vector<std::size_t> train;
        std::vector<std::size_t> test;
        std::set<Gtin> gtin_union;
    };

    const LabelEntry& entry(std::string_view label) const;

    std::deque<DatasetItem> items_;
    std::unordered_map<std::string, std::size_t> by_id_;
    std::map<std::string, LabelEntry, std::less<>> labels_;
    std::vector<std::string> label_order_;
};

/// Parses one manifest line. Throws SchemaError on malformed content.
DatasetItem parse_manifest_line(std::string_view line, const std::filesystem::path& base_dir);

nlohmann::json to_json(const DatasetItem& item);

} // namespace vrag
