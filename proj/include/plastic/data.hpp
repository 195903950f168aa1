#ifndef PLASTIC_DATA_HPP
#define PLASTIC_DATA_HPP

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "plastic/errors.hpp"
#include "plastic/rng.hpp"
#include "plastic/tensor.hpp"

namespace plastic {

/// A labelled set of [C,H,W] tensors with values in [0,1]. Piano-roll items
/// additionally carry piece ids for leakage checks.
struct Dataset {
    std::vector<Tensor> items;
    std::vector<int> labels;
    std::vector<std::string> class_names;
    std::vector<std::string> piece_ids;  // empty for image datasets

    std::size_t size() const { return items.size(); }
};

struct PartitionedDataset {
    Dataset train, valid, test;
};

struct FewShotSpec {
    std::size_t k_per_class = 10;
    std::uint64_t seed = 0;
};

/// A dataset partitioned into disjoint source/target domains by label sets.
/// Labels inside each domain are re-indexed to 0..k-1; the maps record the
/// original label behind each re-indexed class.
struct DomainSplit {
    PartitionedDataset source, target;
    std::vector<int> source_labels, target_labels;      // original ids, sorted
    std::vector<int> source_label_map, target_label_map;  // new index -> original id
};

namespace detail {

inline std::uint32_t read_u32_be(std::istream& in, const std::string& what) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw FormatError("unexpected end of file while reading " + what);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
           std::uint32_t(b[3]);
}

inline std::vector<unsigned char> read_exact(std::istream& in, std::size_t n,
                                             const std::string& what) {
    std::vector<unsigned char> buf(n);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n)
        throw FormatError(what + ": payload truncated (wanted " + std::to_string(n) + " bytes, got " +
                          std::to_string(in.gcount()) + ")");
    return buf;
}

}  // namespace detail

// --------------------------------------------------------------------------
// MNIST IDX
// --------------------------------------------------------------------------

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

/// One IDX image/label file pair -> 1xHxW tensors scaled by 1/255.
inline Dataset load_idx_pair(const std::filesystem::path& images_path,
                             const std::filesystem::path& labels_path) {
    std::ifstream imgs(images_path, std::ios::binary);
    if (!imgs) throw FormatError("cannot open " + images_path.string());
    std::ifstream labs(labels_path, std::ios::binary);
    if (!labs) throw FormatError("cannot open " + labels_path.string());

    if (detail::read_u32_be(imgs, "image magic") != kIdxImagesMagic)
        throw FormatError(images_path.string() + ": bad image-file magic");
    const std::uint32_t n_images = detail::read_u32_be(imgs, "image count");
    const std::uint32_t rows = detail::read_u32_be(imgs, "row count");
    const std::uint32_t cols = detail::read_u32_be(imgs, "column count");

    if (detail::read_u32_be(labs, "label magic") != kIdxLabelsMagic)
        throw FormatError(labels_path.string() + ": bad label-file magic");
    const std::uint32_t n_labels = detail::read_u32_be(labs, "label count");
    if (n_images != n_labels)
        throw FormatError("image/label count mismatch: " + std::to_string(n_images) + " vs " +
                          std::to_string(n_labels));

    auto pixels =
        detail::read_exact(imgs, std::size_t(n_images) * rows * cols, images_path.string());
    auto labels = detail::read_exact(labs, n_labels, labels_path.string());

    Dataset ds;
    ds.items.reserve(n_images);
    ds.labels.reserve(n_images);
    for (std::uint32_t i = 0; i < n_images; ++i) {
        Tensor t({1, rows, cols});
        const unsigned char* src = pixels.data() + std::size_t(i) * rows * cols;
        for (std::size_t p = 0; p < std::size_t(rows) * cols; ++p)
            t[p] = static_cast<double>(src[p]) / 255.0;
        ds.items.push_back(std::move(t));
        ds.labels.push_back(static_cast<int>(labels[i]));
    }
    for (int c = 0; c < 10; ++c) ds.class_names.push_back(std::to_string(c));
    return ds;
}

namespace detail {
inline void append_dataset(Dataset& dst, Dataset src) {
    for (auto& t : src.items) dst.items.push_back(std::move(t));
    dst.labels.insert(dst.labels.end(), src.labels.begin(), src.labels.end());
    for (auto& p : src.piece_ids) dst.piece_ids.push_back(std::move(p));
    if (dst.class_names.empty()) dst.class_names = std::move(src.class_names);
}
}  // namespace detail

/// Everything in the standard directory (train + test files), 70,000 items
/// for the real corpus.
inline Dataset load_mnist(const std::filesystem::path& dir) {
    Dataset all = load_idx_pair(dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte");
    detail::append_dataset(all,
                           load_idx_pair(dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte"));
    return all;
}

/// The train file re-split into train/valid, test file as-is. Validation is
/// the last min(10000, n/6) items of the train file: exactly the last 10,000
/// for the real 60,000-item corpus, proportionally fewer for smaller ones.
inline PartitionedDataset load_mnist_partitioned(const std::filesystem::path& dir) {
    Dataset train_file =
        load_idx_pair(dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte");
    PartitionedDataset out;
    out.test = load_idx_pair(dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte");
    const std::size_t n = train_file.size();
    const std::size_t n_valid = std::min<std::size_t>(10000, n / 6);
    const std::size_t n_train = n - n_valid;
    out.train.class_names = out.valid.class_names = train_file.class_names;
    for (std::size_t i = 0; i < n; ++i) {
        Dataset& dst = i < n_train ? out.train : out.valid;
        dst.items.push_back(std::move(train_file.items[i]));
        dst.labels.push_back(train_file.labels[i]);
    }
    return out;
}

// --------------------------------------------------------------------------
// CIFAR-10 binary batches
// --------------------------------------------------------------------------

inline const std::vector<std::string>& cifar10_class_names() {
    static const std::vector<std::string> names = {"airplane", "automobile", "bird", "cat", "deer",
                                                   "dog",      "frog",       "horse", "ship", "truck"};
    return names;
}

/// One CIFAR-10 binary batch: 3073-byte records of 1 label byte + 3072
/// channel-planar pixels.
inline Dataset load_cifar10_batch(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    std::vector<unsigned char> blob((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    if (blob.empty() || blob.size() % 3073 != 0)
        throw FormatError(path.string() + ": batch size " + std::to_string(blob.size()) +
                          " is not a multiple of the 3073-byte record");
    Dataset ds;
    ds.class_names = cifar10_class_names();
    const std::size_t n = blob.size() / 3073;
    for (std::size_t i = 0; i < n; ++i) {
        const unsigned char* rec = blob.data() + i * 3073;
        ds.labels.push_back(static_cast<int>(rec[0]));
        Tensor t({3, 32, 32});
        for (std::size_t p = 0; p < 3072; ++p) t[p] = static_cast<double>(rec[1 + p]) / 255.0;
        ds.items.push_back(std::move(t));
    }
    return ds;
}

/// All six standard batch files, 60,000 items for the real corpus.
inline Dataset load_cifar10(const std::filesystem::path& dir) {
    Dataset all;
    for (int b = 1; b <= 5; ++b)
        detail::append_dataset(all, load_cifar10_batch(dir / ("data_batch_" + std::to_string(b) + ".bin")));
    detail::append_dataset(all, load_cifar10_batch(dir / "test_batch.bin"));
    return all;
}

/// Concatenated train batches re-split 75%/25% into train/valid (the final
/// quarter of the concatenation, in batch order, becomes validation).
inline PartitionedDataset load_cifar10_partitioned(const std::filesystem::path& dir) {
    Dataset train_files;
    for (int b = 1; b <= 5; ++b)
        detail::append_dataset(train_files,
                               load_cifar10_batch(dir / ("data_batch_" + std::to_string(b) + ".bin")));
    PartitionedDataset out;
    out.test = load_cifar10_batch(dir / "test_batch.bin");
    const std::size_t n = train_files.size();
    const std::size_t n_valid = n / 4;
    const std::size_t n_train = n - n_valid;
    out.train.class_names = out.valid.class_names = train_files.class_names;
    for (std::size_t i = 0; i < n; ++i) {
        Dataset& dst = i < n_train ? out.train : out.valid;
        dst.items.push_back(std::move(train_files.items[i]));
        dst.labels.push_back(train_files.labels[i]);
    }
    return out;
}

// --------------------------------------------------------------------------
// Piano-roll rasters
// --------------------------------------------------------------------------

inline constexpr std::size_t kPianorollPitches = 68;   // centred MIDI range
inline constexpr std::size_t kPianorollSteps = 400;    // 50 quarters at 8 samples each

/// A manifest is one text line per item: `path,label,piece_id`. Paths are
/// relative to the manifest's directory; rasters are raw row-major byte
/// grids of 68 pitches x 400 time steps, nonzero meaning note-on.
inline Dataset load_pianoroll(const std::filesystem::path& manifest) {
    std::ifstream in(manifest);
    if (!in) throw FormatError("cannot open manifest " + manifest.string());
    const std::filesystem::path base = manifest.parent_path();
    Dataset ds;
    std::string line;
    std::size_t lineno = 0;
    int max_label = -1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        const std::size_t c1 = line.find(',');
        const std::size_t c2 = c1 == std::string::npos ? std::string::npos : line.find(',', c1 + 1);
        if (c2 == std::string::npos)
            throw FormatError(manifest.string() + ":" + std::to_string(lineno) +
                              ": expected 'path,label,piece_id'");
        const std::string rel = line.substr(0, c1);
        const std::string label_str = line.substr(c1 + 1, c2 - c1 - 1);
        const std::string piece = line.substr(c2 + 1);
        int label = -1;
        try {
            label = std::stoi(label_str);
        } catch (...) {
            throw FormatError(manifest.string() + ":" + std::to_string(lineno) +
                              ": malformed label '" + label_str + "'");
        }
        if (label < 0 || piece.empty())
            throw FormatError(manifest.string() + ":" + std::to_string(lineno) +
                              ": labels must be non-negative and piece ids non-empty");

        std::ifstream raster(base / rel, std::ios::binary);
        if (!raster) throw FormatError("cannot open raster " + (base / rel).string());
        std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(raster)),
                                         std::istreambuf_iterator<char>());
        if (bytes.size() != kPianorollPitches * kPianorollSteps)
            throw FormatError((base / rel).string() + ": raster holds " +
                              std::to_string(bytes.size()) + " bytes, expected " +
                              std::to_string(kPianorollPitches) + "x" +
                              std::to_string(kPianorollSteps));
        Tensor t({1, kPianorollPitches, kPianorollSteps});
        for (std::size_t p = 0; p < bytes.size(); ++p) t[p] = bytes[p] ? 1.0 : 0.0;
        ds.items.push_back(std::move(t));
        ds.labels.push_back(label);
        ds.piece_ids.push_back(piece);
        max_label = std::max(max_label, label);
    }
    for (int c = 0; c <= max_label; ++c) ds.class_names.push_back("class" + std::to_string(c));
    return ds;
}

/// No piece id may span two subsets.
inline void check_piece_separation(const Dataset& train, const Dataset& valid, const Dataset& test) {
    std::map<std::string, const char*> owner;
    auto claim = [&](const Dataset& ds, const char* name) {
        for (const std::string& piece : ds.piece_ids) {
            auto [it, inserted] = owner.emplace(piece, name);
            if (!inserted && std::string(it->second) != name)
                throw LeakageError("piece '" + piece + "' appears in both " + it->second + " and " +
                                   name + " subsets");
        }
    };
    claim(train, "train");
    claim(valid, "valid");
    claim(test, "test");
}

/// Pre-partitioned corpus: three manifests in one directory, checked for
/// piece-level separation.
inline PartitionedDataset load_pianoroll_partitioned(const std::filesystem::path& dir) {
    PartitionedDataset out;
    out.train = load_pianoroll(dir / "train.manifest");
    out.valid = load_pianoroll(dir / "valid.manifest");
    out.test = load_pianoroll(dir / "test.manifest");
    check_piece_separation(out.train, out.valid, out.test);
    return out;
}

// --------------------------------------------------------------------------
// Domain splitting
// --------------------------------------------------------------------------

namespace detail {

inline Dataset filter_relabel(const Dataset& ds, const std::vector<int>& keep_sorted) {
    Dataset out;
    out.class_names.reserve(keep_sorted.size());
    for (int lbl : keep_sorted)
        out.class_names.push_back(static_cast<std::size_t>(lbl) < ds.class_names.size()
                                      ? ds.class_names[static_cast<std::size_t>(lbl)]
                                      : std::to_string(lbl));
    for (std::size_t i = 0; i < ds.size(); ++i) {
        auto it = std::lower_bound(keep_sorted.begin(), keep_sorted.end(), ds.labels[i]);
        if (it == keep_sorted.end() || *it != ds.labels[i]) continue;
        out.items.push_back(ds.items[i]);
        out.labels.push_back(static_cast<int>(it - keep_sorted.begin()));
        if (!ds.piece_ids.empty()) out.piece_ids.push_back(ds.piece_ids[i]);
    }
    return out;
}

/// k items per (re-indexed) class, sampled without replacement.
inline Dataset subsample_per_class(const Dataset& ds, std::size_t classes, std::size_t k, Rng& rng) {
    std::vector<std::vector<std::size_t>> by_class(classes);
    for (std::size_t i = 0; i < ds.size(); ++i)
        by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);
    std::vector<std::size_t> chosen;
    for (std::size_t c = 0; c < classes; ++c) {
        if (by_class[c].size() < k)
            throw ConfigError("few-shot: class " + std::to_string(c) + " has only " +
                              std::to_string(by_class[c].size()) + " items, need " +
                              std::to_string(k));
        rng.shuffle(by_class[c]);
        by_class[c].resize(k);
        std::sort(by_class[c].begin(), by_class[c].end());
        chosen.insert(chosen.end(), by_class[c].begin(), by_class[c].end());
    }
    std::sort(chosen.begin(), chosen.end());
    Dataset out;
    out.class_names = ds.class_names;
    for (std::size_t i : chosen) {
        out.items.push_back(ds.items[i]);
        out.labels.push_back(ds.labels[i]);
        if (!ds.piece_ids.empty()) out.piece_ids.push_back(ds.piece_ids[i]);
    }
    return out;
}

}  // namespace detail

/// Splits a partitioned dataset into source and target domains by label
/// sets. The source keeps its full train/valid/test subsets; the target's
/// train and valid subsets are few-shot subsampled (k per class, seeded,
/// without replacement) while its test subset keeps every target-label item.
inline DomainSplit split_domains(const PartitionedDataset& data, std::vector<int> source_labels,
                                 std::vector<int> target_labels, const FewShotSpec& few_shot) {
    std::sort(source_labels.begin(), source_labels.end());
    std::sort(target_labels.begin(), target_labels.end());
    if (source_labels.empty() || target_labels.empty())
        throw ConfigError("split_domains: label sets must be non-empty");
    for (int lbl : source_labels)
        if (std::binary_search(target_labels.begin(), target_labels.end(), lbl))
            throw ConfigError("split_domains: label " + std::to_string(lbl) +
                              " appears in both domains");
    std::set<int> present(data.train.labels.begin(), data.train.labels.end());
    for (const Dataset* ds : {&data.valid, &data.test})
        present.insert(ds->labels.begin(), ds->labels.end());
    for (int lbl : source_labels)
        if (!present.count(lbl))
            throw ConfigError("split_domains: source label " + std::to_string(lbl) +
                              " has no items");
    for (int lbl : target_labels)
        if (!present.count(lbl))
            throw ConfigError("split_domains: target label " + std::to_string(lbl) +
                              " has no items");

    DomainSplit split;
    split.source_labels = source_labels;
    split.target_labels = target_labels;
    split.source_label_map = source_labels;
    split.target_label_map = target_labels;

    split.source.train = detail::filter_relabel(data.train, source_labels);
    split.source.valid = detail::filter_relabel(data.valid, source_labels);
    split.source.test = detail::filter_relabel(data.test, source_labels);

    Dataset target_train_pool = detail::filter_relabel(data.train, target_labels);
    Dataset target_valid_pool = detail::filter_relabel(data.valid, target_labels);
    split.target.test = detail::filter_relabel(data.test, target_labels);

    Rng train_rng(derive_seed(few_shot.seed, "fewshot-train"));
    Rng valid_rng(derive_seed(few_shot.seed, "fewshot-valid"));
    split.target.train = detail::subsample_per_class(target_train_pool, target_labels.size(),
                                                     few_shot.k_per_class, train_rng);
    split.target.valid = detail::subsample_per_class(target_valid_pool, target_labels.size(),
                                                     few_shot.k_per_class, valid_rng);
    return split;
}

/// Items whose label is in `keep`; labels re-indexed to the sorted position
/// of their original id (0..k-1).
inline Dataset filter_labels(const Dataset& ds, std::vector<int> keep) {
    std::sort(keep.begin(), keep.end());
    return detail::filter_relabel(ds, keep);
}

/// First n items (deterministic cap used by the desk-scale presets).
inline Dataset take_first(const Dataset& ds, std::size_t n) {
    if (n >= ds.size()) return ds;
    Dataset out;
    out.class_names = ds.class_names;
    out.items.assign(ds.items.begin(), ds.items.begin() + n);
    out.labels.assign(ds.labels.begin(), ds.labels.begin() + n);
    if (!ds.piece_ids.empty())
        out.piece_ids.assign(ds.piece_ids.begin(), ds.piece_ids.begin() + n);
    return out;
}

}  // namespace plastic

#endif  // PLASTIC_DATA_HPP
