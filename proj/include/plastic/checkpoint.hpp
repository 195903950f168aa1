#ifndef PLASTIC_CHECKPOINT_HPP
#define PLASTIC_CHECKPOINT_HPP

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include "plastic/model.hpp"
#include "plastic/serialize.hpp"

namespace plastic {

// Checkpoint file layout (bit-exact contract):
//
//   PLASTICNET-CKPT 1\n
//   spec <byte-count>\n<canonical spec text>
//   meta <byte-count>\n<key=value lines, keys sorted>
//   data <byte-count>\n<raw little-endian 64-bit reals, spec parameter order>
//
// The parameter block carries no per-tensor headers: shapes and order are
// fully determined by the spec text, so save -> load -> save is
// byte-identical.

inline constexpr char kCheckpointMagic[] = "PLASTICNET-CKPT";
inline constexpr int kCheckpointVersion = 1;

using CheckpointMeta = std::map<std::string, std::string>;

struct Checkpoint {
    NetworkSpec spec;
    ParamSet params;
    CheckpointMeta meta;
};

namespace detail {

inline void append_f64_le(std::string& out, double v) {
    const std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xff));
}

inline double read_f64_le(const unsigned char* p) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(p[b]) << (8 * b);
    return std::bit_cast<double>(bits);
}

inline std::string meta_to_text(const CheckpointMeta& meta) {
    std::string out;
    for (const auto& [k, v] : meta) {
        if (k.find('=') != std::string::npos || k.find('\n') != std::string::npos ||
            v.find('\n') != std::string::npos)
            throw UsageError("checkpoint metadata keys/values must not contain '=' or newlines");
        out += k;
        out += '=';
        out += v;
        out += '\n';
    }
    return out;
}

inline CheckpointMeta meta_from_text(const std::string& text) {
    CheckpointMeta meta;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string::npos)
            throw CheckpointError(CheckpointError::Kind::CorruptHeader,
                                  "metadata block not newline-terminated");
        std::string line = text.substr(pos, eol - pos);
        pos = eol + 1;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw CheckpointError(CheckpointError::Kind::CorruptHeader,
                                  "metadata line without '=': " + line);
        meta[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return meta;
}

}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& path, const NetworkSpec& spec,
                            const ParamSet& params, const CheckpointMeta& meta) {
    // The parameter block is spec-ordered; refuse foreign layouts up front.
    ParamSet expected = init_params(spec, 0);
    if (!params.congruent_with(expected))
        throw UsageError("save_checkpoint: parameter set does not match the spec's layout");

    const std::string spec_text = spec_to_text(spec);
    const std::string meta_text = detail::meta_to_text(meta);
    std::string data;
    for (const ParamSet::Entry& e : params.entries())
        for (std::size_t i = 0; i < e.value.size(); ++i) detail::append_f64_le(data, e.value[i]);

    std::string blob;
    blob += kCheckpointMagic;
    blob += ' ';
    blob += std::to_string(kCheckpointVersion);
    blob += '\n';
    blob += "spec " + std::to_string(spec_text.size()) + "\n" + spec_text;
    blob += "meta " + std::to_string(meta_text.size()) + "\n" + meta_text;
    blob += "data " + std::to_string(data.size()) + "\n" + data;

    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw UsageError("save_checkpoint: cannot open " + tmp.string());
        out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
        if (!out) throw UsageError("save_checkpoint: write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

/// Loads a checkpoint, distinguishing corrupt headers, truncated parameter
/// arrays and version mismatches. When `expected` is given, a checkpoint
/// whose spec is shape-incompatible with it is refused.
inline Checkpoint load_checkpoint(const std::filesystem::path& path,
                                  const NetworkSpec* expected = nullptr) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw CheckpointError(CheckpointError::Kind::CorruptHeader,
                              "cannot open checkpoint " + path.string());
    std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    std::size_t pos = 0;
    auto take_line = [&]() {
        std::size_t eol = blob.find('\n', pos);
        if (eol == std::string::npos)
            throw CheckpointError(CheckpointError::Kind::CorruptHeader,
                                  "checkpoint header is not newline-terminated");
        std::string line = blob.substr(pos, eol - pos);
        pos = eol + 1;
        return line;
    };
    auto take_sized_block = [&](const std::string& tag, CheckpointError::Kind on_short) {
        const std::string line = take_line();
        auto toks = split_ws(line);
        if (toks.size() != 2 || toks[0] != tag)
            throw CheckpointError(CheckpointError::Kind::CorruptHeader,
                                  "expected '" + tag + " <bytes>', got '" + line + "'");
        std::size_t count = 0;
        try {
            count = static_cast<std::size_t>(std::stoull(toks[1]));
        } catch (...) {
            throw CheckpointError(CheckpointError::Kind::CorruptHeader,
                                  "malformed byte count in '" + line + "'");
        }
        if (pos + count > blob.size())
            throw CheckpointError(on_short, "checkpoint '" + tag + "' block is truncated (need " +
                                                std::to_string(count) + " bytes)");
        std::string block = blob.substr(pos, count);
        pos += count;
        return block;
    };

    const std::string head = take_line();
    auto head_toks = split_ws(head);
    if (head_toks.size() != 2 || head_toks[0] != kCheckpointMagic)
        throw CheckpointError(CheckpointError::Kind::CorruptHeader,
                              "bad magic in " + path.string());
    int version = 0;
    try {
        version = std::stoi(head_toks[1]);
    } catch (...) {
        throw CheckpointError(CheckpointError::Kind::CorruptHeader, "malformed version number");
    }
    if (version != kCheckpointVersion)
        throw CheckpointError(CheckpointError::Kind::VersionMismatch,
                              "checkpoint version " + std::to_string(version) + ", expected " +
                                  std::to_string(kCheckpointVersion));

    const std::string spec_text = take_sized_block("spec", CheckpointError::Kind::CorruptHeader);
    Checkpoint ckpt;
    try {
        ckpt.spec = spec_from_text(spec_text);
    } catch (const Error& e) {
        throw CheckpointError(CheckpointError::Kind::CorruptHeader,
                              std::string("unreadable spec block: ") + e.what());
    }
    const std::string meta_text = take_sized_block("meta", CheckpointError::Kind::CorruptHeader);
    ckpt.meta = detail::meta_from_text(meta_text);

    const std::string data = take_sized_block("data", CheckpointError::Kind::Truncated);
    if (pos != blob.size())
        throw CheckpointError(CheckpointError::Kind::CorruptHeader,
                              "trailing bytes after parameter block");

    ckpt.params = init_params(ckpt.spec, 0);
    std::size_t need = 0;
    for (const ParamSet::Entry& e : ckpt.params.entries()) need += e.value.size() * 8;
    if (data.size() != need)
        throw CheckpointError(CheckpointError::Kind::Truncated,
                              "parameter block holds " + std::to_string(data.size()) +
                                  " bytes, spec requires " + std::to_string(need));
    const unsigned char* p = reinterpret_cast<const unsigned char*>(data.data());
    for (ParamSet::Entry& e : ckpt.params.entries())
        for (std::size_t i = 0; i < e.value.size(); ++i, p += 8)
            e.value[i] = detail::read_f64_le(p);

    if (expected) {
        ParamSet want = init_params(*expected, 0);
        if (!ckpt.params.congruent_with(want))
            throw CheckpointError(CheckpointError::Kind::ShapeMismatch,
                                  "checkpoint parameters are incompatible with the expected spec");
    }
    return ckpt;
}

}  // namespace plastic

#endif  // PLASTIC_CHECKPOINT_HPP
