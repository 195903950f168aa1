#ifndef PLASTIC_SYNTHETIC_HPP
#define PLASTIC_SYNTHETIC_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "plastic/data.hpp"
#include "plastic/rng.hpp"

namespace plastic {

// Synthetic stand-ins for the real corpora, used by tests and by desk-scale
// experiments when no real data directory is available. The digit classes
// are all drawn from one stroke alphabet (oriented lines and circles), so
// low-level structure is shared across classes while class identity lives in
// the stroke configuration. That makes transfer between label subsets
// meaningful, not just possible.

namespace synth {

inline void draw_line(std::vector<double>& img, std::size_t side, double r0, double c0, double r1,
                      double c1, double thickness, double intensity) {
    const double dr = r1 - r0, dc = c1 - c0;
    const double len_sq = dr * dr + dc * dc;
    for (std::size_t r = 0; r < side; ++r) {
        for (std::size_t c = 0; c < side; ++c) {
            const double pr = static_cast<double>(r) - r0, pc = static_cast<double>(c) - c0;
            double t = len_sq > 0.0 ? (pr * dr + pc * dc) / len_sq : 0.0;
            t = std::clamp(t, 0.0, 1.0);
            const double qr = pr - t * dr, qc = pc - t * dc;
            const double dist = std::sqrt(qr * qr + qc * qc);
            if (dist < thickness) {
                const double v = intensity * std::clamp(1.2 - dist / thickness, 0.0, 1.0);
                img[r * side + c] = std::max(img[r * side + c], v);
            }
        }
    }
}

inline void draw_circle(std::vector<double>& img, std::size_t side, double cr, double cc,
                        double radius, double thickness, double intensity) {
    for (std::size_t r = 0; r < side; ++r) {
        for (std::size_t c = 0; c < side; ++c) {
            const double dr = static_cast<double>(r) - cr, dc = static_cast<double>(c) - cc;
            const double dist = std::abs(std::sqrt(dr * dr + dc * dc) - radius);
            if (dist < thickness) {
                const double v = intensity * std::clamp(1.2 - dist / thickness, 0.0, 1.0);
                img[r * side + c] = std::max(img[r * side + c], v);
            }
        }
    }
}

}  // namespace synth

/// One 28x28 synthetic "digit" of the given class (0..9) as raw bytes.
inline std::vector<unsigned char> synth_digit_image(int cls, Rng& rng) {
    constexpr std::size_t side = 28;
    constexpr double pi = 3.14159265358979323846;
    std::vector<double> img(side * side, 0.0);

    const double jitter_r = rng.uniform(-2.0, 2.0);
    const double jitter_c = rng.uniform(-2.0, 2.0);
    const double cr = 13.5 + jitter_r, cc = 13.5 + jitter_c;
    const double bright = rng.uniform(0.75, 1.0);

    // Main stroke: an oriented bar through the centre.
    const double angle = pi * (18.0 * cls) / 180.0 + rng.uniform(-0.08, 0.08);
    const double half = 8.0 + rng.uniform(-1.0, 1.0);
    synth::draw_line(img, side, cr - half * std::sin(angle), cc - half * std::cos(angle),
                     cr + half * std::sin(angle), cc + half * std::cos(angle),
                     1.9 + rng.uniform(-0.2, 0.2), bright);

    // Secondary stroke at a class-specific offset and angle.
    const double b_angle = angle + pi * 63.0 / 180.0;
    const double br = cr + 6.0 * std::cos(pi * 40.0 * cls / 180.0) + rng.uniform(-0.7, 0.7);
    const double bc = cc + 6.0 * std::sin(pi * 40.0 * cls / 180.0) + rng.uniform(-0.7, 0.7);
    const double bhalf = 5.0 + rng.uniform(-0.8, 0.8);
    synth::draw_line(img, side, br - bhalf * std::sin(b_angle), bc - bhalf * std::cos(b_angle),
                     br + bhalf * std::sin(b_angle), bc + bhalf * std::cos(b_angle),
                     1.7 + rng.uniform(-0.2, 0.2), bright * rng.uniform(0.85, 1.0));

    // Even classes carry a ring at a class-specific corner.
    if (cls % 2 == 0) {
        const double qr = cr + 5.5 * std::cos(pi * (97.0 * cls + 30.0) / 180.0);
        const double qc = cc + 5.5 * std::sin(pi * (97.0 * cls + 30.0) / 180.0);
        synth::draw_circle(img, side, qr + rng.uniform(-0.7, 0.7), qc + rng.uniform(-0.7, 0.7),
                           4.0 + rng.uniform(-0.5, 0.5), 1.5, bright * rng.uniform(0.8, 1.0));
    }

    std::vector<unsigned char> bytes(side * side);
    for (std::size_t i = 0; i < img.size(); ++i) {
        double v = img[i] + rng.uniform(0.0, 0.10);
        bytes[i] = static_cast<unsigned char>(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5);
    }
    return bytes;
}

namespace synth {

inline void write_u32_be(std::ofstream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>((v >> 24) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>(v & 0xff)};
    out.write(reinterpret_cast<char*>(b), 4);
}

inline void write_idx_files(const std::filesystem::path& images_path,
                            const std::filesystem::path& labels_path, std::size_t count,
                            Rng& rng) {
    std::ofstream imgs(images_path, std::ios::binary | std::ios::trunc);
    std::ofstream labs(labels_path, std::ios::binary | std::ios::trunc);
    if (!imgs || !labs)
        throw UsageError("cannot write synthetic dataset to " + images_path.string());
    write_u32_be(imgs, kIdxImagesMagic);
    write_u32_be(imgs, static_cast<std::uint32_t>(count));
    write_u32_be(imgs, 28);
    write_u32_be(imgs, 28);
    write_u32_be(labs, kIdxLabelsMagic);
    write_u32_be(labs, static_cast<std::uint32_t>(count));
    for (std::size_t i = 0; i < count; ++i) {
        const int cls = static_cast<int>(rng.below(10));
        auto bytes = synth_digit_image(cls, rng);
        imgs.write(reinterpret_cast<const char*>(bytes.data()),
                   static_cast<std::streamsize>(bytes.size()));
        unsigned char lbl = static_cast<unsigned char>(cls);
        labs.write(reinterpret_cast<char*>(&lbl), 1);
    }
}

}  // namespace synth

/// Writes a 10-class digit corpus in the exact MNIST IDX layout
/// (train-images-idx3-ubyte etc.), loadable by load_mnist{,_partitioned}.
inline void write_synthetic_digits(const std::filesystem::path& dir, std::size_t n_train,
                                   std::size_t n_test, std::uint64_t seed) {
    std::filesystem::create_directories(dir);
    Rng train_rng(derive_seed(seed, "synth-train"));
    Rng test_rng(derive_seed(seed, "synth-test"));
    synth::write_idx_files(dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte",
                           n_train, train_rng);
    synth::write_idx_files(dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte", n_test,
                           test_rng);
}

/// Writes a small piece-separated piano-roll corpus: raster files plus
/// train/valid/test manifests in the directory load_pianoroll_partitioned
/// expects. Pieces split 3:1:1 across subsets, never spanning two.
inline void write_synthetic_pianoroll(const std::filesystem::path& dir, std::size_t classes,
                                      std::size_t pieces_per_class,
                                      std::size_t windows_per_piece, std::uint64_t seed) {
    namespace fs = std::filesystem;
    fs::create_directories(dir / "rasters");
    std::ofstream train(dir / "train.manifest", std::ios::trunc);
    std::ofstream valid(dir / "valid.manifest", std::ios::trunc);
    std::ofstream test(dir / "test.manifest", std::ios::trunc);
    Rng rng(derive_seed(seed, "synth-pianoroll"));

    for (std::size_t cls = 0; cls < classes; ++cls) {
        for (std::size_t piece = 0; piece < pieces_per_class; ++piece) {
            const std::string piece_id = "c" + std::to_string(cls) + "p" + std::to_string(piece);
            // Class-flavoured texture: base pitch band and rhythm period.
            const std::size_t base_pitch = 10 + cls * (40 / std::max<std::size_t>(1, classes));
            const std::size_t period = 4 + 2 * (cls % 3);
            for (std::size_t w = 0; w < windows_per_piece; ++w) {
                std::vector<unsigned char> grid(kPianorollPitches * kPianorollSteps, 0);
                std::size_t pitch = base_pitch + rng.below(8);
                for (std::size_t t = 0; t < kPianorollSteps; t += period) {
                    if (rng.bernoulli(0.85)) {
                        const std::size_t len = period > 1 ? period - 1 : 1;  // final 32nd blank
                        for (std::size_t d = 0; d < len && t + d < kPianorollSteps; ++d)
                            grid[pitch * kPianorollSteps + t + d] = 1;
                    }
                    pitch = std::clamp<std::size_t>(
                        pitch + rng.below(5) - 2, 2, kPianorollPitches - 3);
                }
                const std::string rel =
                    "rasters/" + piece_id + "w" + std::to_string(w) + ".roll";
                std::ofstream raster(dir / rel, std::ios::binary | std::ios::trunc);
                raster.write(reinterpret_cast<const char*>(grid.data()),
                             static_cast<std::streamsize>(grid.size()));
                std::ofstream& manifest =
                    piece % 5 < 3 ? train : (piece % 5 == 3 ? valid : test);
                manifest << rel << "," << cls << "," << piece_id << "\n";
            }
        }
    }
}

}  // namespace plastic

#endif  // PLASTIC_SYNTHETIC_HPP
