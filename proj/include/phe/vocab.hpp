#pragma once

// Row indexers: hashing (fixed table) and a collision-free vocabulary that
// appends one row per distinct item.

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "phe/encoder.hpp"

namespace phe {

class VocabMap {
public:
    // Returns (row, inserted).
    std::pair<std::size_t, bool> lookup_or_insert(std::string_view item) {
        auto it = index_.find(std::string(item));
        if (it != index_.end()) return {it->second, false};
        const std::size_t row = items_.size();
        items_.emplace_back(item);
        index_.emplace(items_.back(), row);
        return {row, true};
    }

    std::optional<std::size_t> find(std::string_view item) const {
        auto it = index_.find(std::string(item));
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    std::size_t size() const { return items_.size(); }
    const std::vector<std::string>& items() const { return items_; }  // in row order

private:
    std::vector<std::string> items_;
    std::unordered_map<std::string, std::size_t> index_;
};

struct HashIndexer {
    static constexpr bool grows = false;

    std::size_t required_rows(const EncoderConfig& cfg) const { return cfg.spec.bucket_count; }
    void observe(const EncoderConfig&, std::string_view, std::string_view) {}

    Lookup lookup(const EncoderConfig& cfg, std::string_view column, std::string_view value) const {
        return lookup_for(cfg, hash_key(cfg, column, value));
    }
};

// One private row per (column, item); tables grow on first sight.
struct VocabIndexer {
    static constexpr bool grows = true;
    VocabMap vocab;

    std::size_t required_rows(const EncoderConfig&) const { return vocab.size(); }
    void observe(const EncoderConfig& cfg, std::string_view column, std::string_view value) {
        vocab.lookup_or_insert(hash_key(cfg, column, value));
    }

    Lookup lookup(const EncoderConfig& cfg, std::string_view column, std::string_view value) const {
        auto row = vocab.find(hash_key(cfg, column, value));
        if (!row) throw std::logic_error("VocabIndexer: item was never observed");
        return Lookup{{*row}, std::nullopt};
    }
};

}  // namespace phe
