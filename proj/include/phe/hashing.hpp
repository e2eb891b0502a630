#pragma once

// Seeded FNV-1a hashing of categorical items into the embedding table (B rows)
// and the aggregation-weight table (P rows).

#include <array>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "phe/errors.hpp"

namespace phe {

inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

constexpr std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = kFnvOffset) noexcept {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= kFnvPrime;
    }
    return h;
}

// FNV-1a over (seed as 8 big-endian bytes) followed by the item bytes.
constexpr std::uint64_t seeded_fnv1a64(std::uint64_t seed, std::string_view item) noexcept {
    std::uint64_t h = kFnvOffset;
    for (int shift = 56; shift >= 0; shift -= 8) {
        h ^= (seed >> shift) & 0xffU;
        h *= kFnvPrime;
    }
    return fnv1a64(item, h);
}

constexpr std::uint64_t splitmix64(std::uint64_t& state) noexcept {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

struct HashSpec {
    std::size_t bucket_count = 7;   // B
    std::size_t num_hashes = 3;     // K
    std::size_t weight_buckets = 11;  // P
    std::size_t embed_dim = 20;     // d
    std::uint64_t seed = 0;         // family seed the default seed list derives from
    std::vector<std::uint64_t> seeds;  // K seeds for E, then 1 for W

    // Builds a spec whose K+1 seeds come from splitmix64(seed).
    static HashSpec from_seed(std::size_t B, std::size_t K, std::size_t P, std::size_t d,
                              std::uint64_t seed) {
        HashSpec s;
        s.bucket_count = B;
        s.num_hashes = K;
        s.weight_buckets = P;
        s.embed_dim = d;
        s.seed = seed;
        s.seeds = derive_seeds(seed, K + 1);
        s.validate();
        return s;
    }

    static std::vector<std::uint64_t> derive_seeds(std::uint64_t seed, std::size_t n) {
        std::vector<std::uint64_t> out;
        std::unordered_set<std::uint64_t> seen;
        std::uint64_t state = seed;
        while (out.size() < n) {
            std::uint64_t v = splitmix64(state);
            if (seen.insert(v).second) out.push_back(v);
        }
        return out;
    }

    void validate() const {
        if (bucket_count < 1) throw ConfigError("bucket_count must be >= 1");
        if (num_hashes < 1) throw ConfigError("num_hashes must be >= 1");
        if (weight_buckets < 1) throw ConfigError("weight_buckets must be >= 1");
        if (embed_dim < 1) throw ConfigError("embed_dim must be >= 1");
        if (seeds.size() != num_hashes + 1)
            throw ConfigError("seeds must hold num_hashes + 1 values");
        std::unordered_set<std::uint64_t> uniq(seeds.begin(), seeds.end());
        if (uniq.size() != seeds.size()) throw ConfigError("seeds must be pairwise distinct");
    }

    friend bool operator==(const HashSpec&, const HashSpec&) = default;
};

inline std::size_t hash_item(const HashSpec& spec, std::size_t k, std::string_view item) {
    if (k >= spec.num_hashes) throw std::invalid_argument("hash index k out of range");
    return static_cast<std::size_t>(seeded_fnv1a64(spec.seeds[k], item) % spec.bucket_count);
}

inline std::size_t hash_weight(const HashSpec& spec, std::string_view item) {
    return static_cast<std::size_t>(seeded_fnv1a64(spec.seeds[spec.num_hashes], item) %
                                    spec.weight_buckets);
}

struct Signature {
    std::vector<std::size_t> rows;  // K indices into E, ordered by k
    std::size_t weight_row = 0;     // index into W

    friend bool operator==(const Signature&, const Signature&) = default;
};

inline Signature hash_signature(const HashSpec& spec, std::string_view item) {
    Signature sig;
    sig.rows.reserve(spec.num_hashes);
    for (std::size_t k = 0; k < spec.num_hashes; ++k) sig.rows.push_back(hash_item(spec, k, item));
    sig.weight_row = hash_weight(spec, item);
    return sig;
}

// Config JSON: {bucket_count, num_hashes, weight_buckets, embed_dim, seed[, seeds]}.
inline void to_json(nlohmann::json& j, const HashSpec& s) {
    j = nlohmann::json{{"bucket_count", s.bucket_count},
                       {"num_hashes", s.num_hashes},
                       {"weight_buckets", s.weight_buckets},
                       {"embed_dim", s.embed_dim},
                       {"seed", s.seed}};
    if (s.seeds != HashSpec::derive_seeds(s.seed, s.num_hashes + 1)) j["seeds"] = s.seeds;
}

inline void from_json(const nlohmann::json& j, HashSpec& s) {
    static const std::array<std::string_view, 6> known = {
        "bucket_count", "num_hashes", "weight_buckets", "embed_dim", "seed", "seeds"};
    if (!j.is_object()) throw ConfigError("hash: expected an object");
    for (const auto& [key, _] : j.items()) {
        bool ok = false;
        for (auto k : known) ok = ok || key == k;
        if (!ok) throw ConfigError("hash." + key + ": unknown key");
    }
    auto read_positive = [&](const char* key, std::size_t fallback) -> std::size_t {
        if (!j.contains(key)) return fallback;
        const auto& v = j.at(key);
        if (!v.is_number_integer() || v.get<long long>() < 1)
            throw ConfigError(std::string("hash.") + key + ": must be a positive integer");
        return v.get<std::size_t>();
    };
    s.bucket_count = read_positive("bucket_count", 7);
    s.num_hashes = read_positive("num_hashes", 3);
    s.weight_buckets = read_positive("weight_buckets", 11);
    s.embed_dim = read_positive("embed_dim", 20);
    s.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("seeds")) {
        s.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    } else {
        s.seeds = HashSpec::derive_seeds(s.seed, s.num_hashes + 1);
    }
    try {
        s.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("hash: ") + e.what());
    }
}

}  // namespace phe
