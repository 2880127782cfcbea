#include "vrag/dataset.hpp"

#include "vrag/errors.hpp"

#include <fstream>
#include <unordered_set>

namespace vrag {

using nlohmann::json;

std::string_view to_string(Split s) noexcept { return s == Split::train ? "train" : "test"; }

namespace {

std::string required_string(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || !it->is_string() || it->get_ref<const std::string&>().empty())
        throw SchemaError(std::string("missing or empty \"") + key + "\"");
    return it->get<std::string>();
}

} // namespace

DatasetItem parse_manifest_line(std::string_view line, const std::filesystem::path& base_dir) {
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) throw SchemaError("not valid JSON");
    if (!j.is_object()) throw SchemaError("line is not a JSON object");

    DatasetItem item;
    item.item_id = required_string(j, "item_id");
    std::filesystem::path image = required_string(j, "image_path");
    item.image_path = image.is_absolute() ? image : base_dir / image;
    auto split = required_string(j, "split");
    if (split == "train")
        item.split = Split::train;
    else if (split == "test")
        item.split = Split::test;
    else
        throw SchemaError("split must be \"train\" or \"test\", got \"" + split + "\"");
    item.label = required_string(j, "label");
    item.product = product_from_json(j.value("product", json::object()));
    item.promotion = promotion_from_json(j.value("promotion", json::object()));
    return item;
}

json to_json(const DatasetItem& item) {
    return {{"item_id", item.item_id},
            {"image_path", item.image_path.string()},
            {"split", std::string(to_string(item.split))},
            {"label", item.label},
            {"product", to_json(item.product)},
            {"promotion", to_json(item.promotion)}};
}

DatasetStats Dataset::ingest_manifest(const std::filesystem::path& manifest, IngestOptions options) {
    std::ifstream in(manifest);
    if (!in) throw IngestError(0, "cannot open manifest " + manifest.string());
    return ingest_stream(in, manifest.parent_path(), options);
}

DatasetStats Dataset::ingest_stream(std::istream& in, const std::filesystem::path& base_dir, IngestOptions options) {
    Dataset fresh;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        DatasetItem item;
        try {
            item = parse_manifest_line(line, base_dir);
        } catch (const SchemaError& e) {
            throw IngestError(line_no, e.what());
        }
        if (options.require_images && !std::filesystem::exists(item.image_path))
            throw IngestError(line_no, "image not found: " + item.image_path.string());
        if (fresh.by_id_.contains(item.item_id))
            throw DuplicateItem("line " + std::to_string(line_no) + ": duplicate item_id \"" + item.item_id + "\"");
        fresh.add_item(std::move(item));
    }
    *this = std::move(fresh);
    return stats();
}

void Dataset::add_item(DatasetItem item) {
    if (item.item_id.empty() || item.label.empty()) throw SchemaError("item_id and label must be non-empty");
    if (by_id_.contains(item.item_id)) throw DuplicateItem("duplicate item_id \"" + item.item_id + "\"");
    std::size_t index = items_.size();
    auto [it, inserted] = labels_.try_emplace(item.label);
    if (inserted) label_order_.push_back(item.label);
    auto& e = it->second;
    (item.split == Split::train ? e.train : e.test).push_back(index);
    e.gtin_union.insert(item.product.gtins.begin(), item.product.gtins.end());
    by_id_.emplace(item.item_id, index);
    items_.push_back(std::move(item));
}

DatasetStats Dataset::stats() const {
    DatasetStats s;
    s.n_items = items_.size();
    s.n_classes = labels_.size();
    for (const auto& [label, e] : labels_) {
        s.n_train += e.train.size();
        s.n_test += e.test.size();
        s.per_class_train[label] = e.train.size();
        s.per_class_test[label] = e.test.size();
    }
    return s;
}

const DatasetItem* Dataset::find(std::string_view item_id) const {
    auto it = by_id_.find(std::string(item_id));
    return it == by_id_.end() ? nullptr : &items_[it->second];
}

bool Dataset::has_label(std::string_view label) const { return labels_.find(label) != labels_.end(); }

const Dataset::LabelEntry& Dataset::entry(std::string_view label) const {
    auto it = labels_.find(label);
    if (it == labels_.end()) throw UnknownLabel("unknown label \"" + std::string(label) + "\"");
    return it->second;
}

std::vector<const DatasetItem*> Dataset::test_items() const {
    std::vector<const DatasetItem*> out;
    for (const auto& item : items_)
        if (item.split == Split::test) out.push_back(&item);
    return out;
}

std::vector<const DatasetItem*> Dataset::relational_query(std::string_view label,
                                                          std::span<const std::string> order) const {
    const auto& e = entry(label);
    std::vector<const DatasetItem*> out;
    out.reserve(e.train.size());
    std::unordered_set<std::size_t> taken;
    for (const auto& id : order) {
        auto it = by_id_.find(id);
        if (it == by_id_.end()) continue;
        const auto& item = items_[it->second];
        if (item.split != Split::train || item.label != label) continue;
        if (taken.insert(it->second).second) out.push_back(&item);
    }
    for (auto idx : e.train)
        if (!taken.contains(idx)) out.push_back(&items_[idx]);
    return out;
}

std::set<Gtin> Dataset::class_gtin_union(std::string_view label) const { return entry(label).gtin_union; }

} // namespace vrag
