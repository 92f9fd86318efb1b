#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "udjfl/errors.hpp"
#include "udjfl/nn.hpp"
#include "udjfl/rng.hpp"

namespace udjfl {

/// A pool of labeled samples with a per-row ambiguity flag. Clean rows carry
/// no injected label noise; ambiguous rows come from class-overlap regions.
/// `group` is the class-sort key for sharding: the label for clean rows, the
/// source overlap pair for ambiguous rows (so one shard keeps both label
/// populations of an overlap region together).
struct LabeledPool {
    std::size_t feature_dim = 0;
    int num_classes = 0;
    std::vector<double> features;        // n * feature_dim, row-major
    std::vector<int> labels;             // n
    std::vector<std::uint8_t> ambiguous; // n
    std::vector<int> group;              // n

    std::size_t size() const { return labels.size(); }
};

/// How many clean/ambiguous shards each client receives, plus the shard size
/// and the size of the clean-only global test set reserved before sharding.
struct ShardSpec {
    std::vector<int> clean_shards;
    std::vector<int> ambiguous_shards;
    int shard_size = 60;
    std::size_t global_test_size = 1000;

    std::size_t num_clients() const { return clean_shards.size(); }

    // Five clients, 20 shards each, with an increasing share of ambiguous data.
    static ShardSpec default_five_client() {
        ShardSpec s;
        s.clean_shards = {19, 15, 10, 5, 1};
        s.ambiguous_shards = {1, 5, 10, 15, 19};
        s.shard_size = 60;
        s.global_test_size = 1000;
        return s;
    }
};

struct ClientSplit {
    Batch train;
    Batch test;
    // provenance, row-aligned with train/test: ambiguity flags and pool rows
    std::vector<std::uint8_t> train_ambiguous, test_ambiguous;
    std::vector<std::size_t> train_rows, test_rows;
};

struct Partition {
    std::vector<ClientSplit> clients;
    Batch global_test;  // clean-only
    std::vector<std::size_t> global_test_rows;
};

/// Synthetic classification data with controllable aleatoric uncertainty.
///
/// Classes are Gaussian clusters centered on the unit circle. For every class
/// the pool holds n_per_class clean rows (drawn at the class center) and
/// n_per_class ambiguous rows (drawn at the midpoint between the class center
/// and its clockwise neighbor, with the label flipped to that neighbor with
/// probability noise_rate). The flip noise is irreducible, which is exactly
/// what a softmax-entropy score is supposed to pick up.
inline LabeledPool gen_synthetic(std::size_t n_per_class, int num_classes, double noise_rate,
                                 double spread, std::uint64_t seed) {
    if (num_classes < 2) throw ConfigError("gen_synthetic: need at least 2 classes");
    if (n_per_class < 1) throw ConfigError("gen_synthetic: need at least 1 sample per class");
    if (!(noise_rate >= 0.0 && noise_rate <= 1.0))
        throw ConfigError("gen_synthetic: noise_rate must be in [0,1]");
    if (!(spread > 0.0)) throw ConfigError("gen_synthetic: spread must be > 0");

    constexpr double kTwoPi = 2.0 * 3.141592653589793238462643383279502884;
    LabeledPool pool;
    pool.feature_dim = 2;
    pool.num_classes = num_classes;
    const std::size_t total = 2 * n_per_class * static_cast<std::size_t>(num_classes);
    pool.features.reserve(total * 2);
    pool.labels.reserve(total);
    pool.ambiguous.reserve(total);
    pool.group.reserve(total);

    Rng rng(mix_seed(seed, seed_tag::data_gen));

    // Clean block, class-major.
    for (int c = 0; c < num_classes; ++c) {
        const double angle = kTwoPi * c / num_classes;
        const double cx = std::cos(angle), cy = std::sin(angle);
        for (std::size_t i = 0; i < n_per_class; ++i) {
            pool.features.push_back(cx + spread * rng.normal());
            pool.features.push_back(cy + spread * rng.normal());
            pool.labels.push_back(c);
            pool.ambiguous.push_back(0);
            pool.group.push_back(c);
        }
    }
    // Ambiguous block: the overlap region between class c and class (c+1)
    // mod C, sampled as a ribbon of lattice sites along the inter-center
    // axis. Sites repeat exact feature vectors, so the label-flip noise is
    // irreducible for any model no matter its capacity, and the sites nearest
    // the neighboring cluster are contested between the flip labels and the
    // neighbor's clean mass; who wins them depends on how much attention the
    // trained model gives this region.
    for (int c = 0; c < num_classes; ++c) {
        const int neighbor = (c + 1) % num_classes;
        const double a0 = kTwoPi * c / num_classes;
        const double a1 = kTwoPi * neighbor / num_classes;
        const double x0 = std::cos(a0), y0 = std::sin(a0);
        const double x1 = std::cos(a1), y1 = std::sin(a1);
        const double mx = 0.5 * (x0 + x1), my = 0.5 * (y0 + y1);
        // axis unit toward the neighbor, and its perpendicular
        const double chord = std::hypot(x1 - x0, y1 - y0);
        const double ux = (x1 - x0) / chord, uy = (y1 - y0) / chord;
        const double cell = 0.5 * spread;
        for (std::size_t i = 0; i < n_per_class; ++i) {
            const double axis = (static_cast<double>(rng.below(7)) - 3.0) / 12.0 * chord;
            const double perp = cell * std::clamp(std::round(rng.normal()), -1.0, 1.0);
            pool.features.push_back(mx + axis * ux - perp * uy);
            pool.features.push_back(my + axis * uy + perp * ux);
            const bool flip = rng.uniform() < noise_rate;
            pool.labels.push_back(flip ? neighbor : c);
            pool.ambiguous.push_back(1);
            pool.group.push_back(c);
        }
    }
    return pool;
}

namespace detail {

inline Batch gather_rows(const LabeledPool& pool, const std::vector<std::size_t>& indices) {
    Batch b;
    b.rows = indices.size();
    b.cols = pool.feature_dim;
    b.features.resize(b.rows * b.cols);
    b.labels.resize(b.rows);
    for (std::size_t k = 0; k < indices.size(); ++k) {
        std::copy_n(pool.features.data() + indices[k] * pool.feature_dim, pool.feature_dim,
                    b.features.data() + k * b.cols);
        b.labels[k] = pool.labels[indices[k]];
    }
    return b;
}

}  // namespace detail

/// Non-IID shard partitioner.
///
/// The clean-only global test set is reserved first (seeded draw from the
/// clean rows). The remaining clean and ambiguous rows are sorted by class
/// independently (stable), cut into contiguous shards of shard_size, and the
/// two shard decks are shuffled and dealt per the requested per-client shard
/// counts. Each client's samples are then shuffled and split 80/20 into
/// train/test.
inline Partition partition_shards(const LabeledPool& pool, const ShardSpec& spec, std::uint64_t seed) {
    const std::size_t n_clients = spec.num_clients();
    if (n_clients == 0) throw ConfigError("partition_shards: no clients in spec");
    if (spec.ambiguous_shards.size() != n_clients)
        throw ConfigError("partition_shards: clean/ambiguous shard lists differ in length");
    if (spec.shard_size < 1) throw ConfigError("partition_shards: shard_size must be >= 1");
    for (std::size_t i = 0; i < n_clients; ++i)
        if (spec.clean_shards[i] < 0 || spec.ambiguous_shards[i] < 0)
            throw ConfigError("partition_shards: shard counts must be >= 0");

    std::vector<std::size_t> clean_idx, ambiguous_idx;
    for (std::size_t i = 0; i < pool.size(); ++i)
        (pool.ambiguous[i] ? ambiguous_idx : clean_idx).push_back(i);

    // Global test reservation comes out of the clean rows only.
    Rng reserve_rng(mix_seed(seed, seed_tag::partition));
    reserve_rng.shuffle(clean_idx);
    if (clean_idx.size() < spec.global_test_size)
        throw ConfigError("partition_shards: pool too small for the global test set");
    std::vector<std::size_t> test_idx(clean_idx.begin(),
                                      clean_idx.begin() + static_cast<std::ptrdiff_t>(spec.global_test_size));
    clean_idx.erase(clean_idx.begin(), clean_idx.begin() + static_cast<std::ptrdiff_t>(spec.global_test_size));

    const auto by_group = [&](std::size_t a, std::size_t b) { return pool.group[a] < pool.group[b]; };
    std::stable_sort(clean_idx.begin(), clean_idx.end(), by_group);
    std::stable_sort(ambiguous_idx.begin(), ambiguous_idx.end(), by_group);

    const std::size_t shard_size = static_cast<std::size_t>(spec.shard_size);
    auto cut_shards = [shard_size](const std::vector<std::size_t>& rows) {
        std::vector<std::vector<std::size_t>> shards;
        for (std::size_t start = 0; start + shard_size <= rows.size(); start += shard_size)
            shards.emplace_back(rows.begin() + static_cast<std::ptrdiff_t>(start),
                                rows.begin() + static_cast<std::ptrdiff_t>(start + shard_size));
        return shards;
    };
    std::vector<std::vector<std::size_t>> clean_deck = cut_shards(clean_idx);
    std::vector<std::vector<std::size_t>> ambiguous_deck = cut_shards(ambiguous_idx);

    const long need_clean = std::accumulate(spec.clean_shards.begin(), spec.clean_shards.end(), 0L);
    const long need_ambiguous =
        std::accumulate(spec.ambiguous_shards.begin(), spec.ambiguous_shards.end(), 0L);
    if (need_clean > static_cast<long>(clean_deck.size()) ||
        need_ambiguous > static_cast<long>(ambiguous_deck.size()))
        throw ConfigError("partition_shards: pool too small for the requested shards");

    reserve_rng.shuffle(clean_deck);
    reserve_rng.shuffle(ambiguous_deck);

    Partition part;
    part.global_test = detail::gather_rows(pool, test_idx);
    part.global_test_rows = std::move(test_idx);

    std::size_t clean_next = 0, ambiguous_next = 0;
    for (std::size_t c = 0; c < n_clients; ++c) {
        std::vector<std::size_t> rows;
        for (int s = 0; s < spec.clean_shards[c]; ++s) {
            const auto& shard = clean_deck[clean_next++];
            rows.insert(rows.end(), shard.begin(), shard.end());
        }
        for (int s = 0; s < spec.ambiguous_shards[c]; ++s) {
            const auto& shard = ambiguous_deck[ambiguous_next++];
            rows.insert(rows.end(), shard.begin(), shard.end());
        }
        Rng split_rng(mix_seed(mix_seed(seed, seed_tag::split), c));
        split_rng.shuffle(rows);
        const std::size_t train_n = rows.size() * 4 / 5;
        ClientSplit split;
        split.train_rows.assign(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(train_n));
        split.test_rows.assign(rows.begin() + static_cast<std::ptrdiff_t>(train_n), rows.end());
        split.train = detail::gather_rows(pool, split.train_rows);
        split.test = detail::gather_rows(pool, split.test_rows);
        for (std::size_t r : split.train_rows) split.train_ambiguous.push_back(pool.ambiguous[r]);
        for (std::size_t r : split.test_rows) split.test_ambiguous.push_back(pool.ambiguous[r]);
        part.clients.push_back(std::move(split));
    }
    return part;
}

namespace detail {

inline std::uint32_t read_be32(std::istream& in, const std::string& path) {
    unsigned char buf[4];
    in.read(reinterpret_cast<char*>(buf), 4);
    if (!in) throw FormatError("idx: truncated file: " + path);
    return (std::uint32_t(buf[0]) << 24) | (std::uint32_t(buf[1]) << 16) |
           (std::uint32_t(buf[2]) << 8) | std::uint32_t(buf[3]);
}

}  // namespace detail

/// IDX binary loader (the classic MNIST file format): big-endian magics
/// 0x00000803 (images, dims n x rows x cols) and 0x00000801 (labels, dim n).
/// Pixel bytes are scaled to [0, 1]. All rows are marked clean.
inline LabeledPool load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw FormatError("idx: cannot open " + images_path);
    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab) throw FormatError("idx: cannot open " + labels_path);

    const std::uint32_t img_magic = detail::read_be32(img, images_path);
    if (img_magic != 0x00000803u)
        throw FormatError("idx: bad image magic in " + images_path);
    const std::uint32_t n_images = detail::read_be32(img, images_path);
    const std::uint32_t rows = detail::read_be32(img, images_path);
    const std::uint32_t cols = detail::read_be32(img, images_path);

    const std::uint32_t lab_magic = detail::read_be32(lab, labels_path);
    if (lab_magic != 0x00000801u)
        throw FormatError("idx: bad label magic in " + labels_path);
    const std::uint32_t n_labels = detail::read_be32(lab, labels_path);
    if (n_images != n_labels)
        throw FormatError("idx: image/label count mismatch");

    LabeledPool pool;
    pool.feature_dim = static_cast<std::size_t>(rows) * cols;
    pool.features.resize(static_cast<std::size_t>(n_images) * pool.feature_dim);
    pool.labels.resize(n_images);
    pool.ambiguous.assign(n_images, 0);
    pool.group.resize(n_images);

    std::vector<unsigned char> raw(pool.feature_dim);
    for (std::uint32_t i = 0; i < n_images; ++i) {
        img.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
        if (!img) throw FormatError("idx: truncated image data: " + images_path);
        for (std::size_t j = 0; j < raw.size(); ++j)
            pool.features[i * pool.feature_dim + j] = raw[j] / 255.0;
        unsigned char y;
        lab.read(reinterpret_cast<char*>(&y), 1);
        if (!lab) throw FormatError("idx: truncated label data: " + labels_path);
        pool.labels[i] = y;
        pool.group[i] = y;
    }
    int max_label = 0;
    for (int y : pool.labels) max_label = std::max(max_label, y);
    pool.num_classes = max_label + 1;
    return pool;
}

}  // namespace udjfl
