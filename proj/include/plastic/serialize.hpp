#ifndef PLASTIC_SERIALIZE_HPP
#define PLASTIC_SERIALIZE_HPP

#include <cstdio>
#include <cstdlib>
#include <sstream>
#include <string>
#include <vector>

#include "plastic/errors.hpp"
#include "plastic/model.hpp"

namespace plastic {

/// Canonical, round-trip-exact text form of a double. Serialising the parsed
/// value reproduces the same text, which keeps derived files byte-stable.
inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    // Prefer the shortest representation that still round-trips.
    for (int prec = 1; prec < 17; ++prec) {
        char shorter[40];
        std::snprintf(shorter, sizeof(shorter), "%.*g", prec, v);
        if (std::strtod(shorter, nullptr) == v) return shorter;
    }
    return buf;
}

inline double parse_double(const std::string& s) {
    char* end = nullptr;
    double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0')
        throw FormatError("malformed real number '" + s + "'");
    return v;
}

inline std::vector<std::string> split_ws(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream in(line);
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

/// Canonical text form of a NetworkSpec; the checkpoint format embeds this
/// verbatim. parse(spec_to_text(s)) == s and the serialisation is stable.
inline std::string spec_to_text(const NetworkSpec& spec) {
    std::ostringstream out;
    out << "task " << to_string(spec.task) << "\n";
    out << "input " << spec.input_shape[0] << " " << spec.input_shape[1] << " "
        << spec.input_shape[2] << "\n";
    out << "classes " << spec.num_classes << "\n";
    out << "alpha " << fmt_double(spec.alpha_mt) << "\n";
    out << "reg " << fmt_double(spec.reg.l2_lambda) << " " << fmt_double(spec.reg.prior_lambda)
        << " " << fmt_double(spec.reg.sparsity_coeff) << " "
        << fmt_double(spec.reg.sparsity_target) << "\n";
    out << "layers " << spec.layers.size() << "\n";
    for (const LayerSpec& l : spec.layers) {
        std::visit(
            [&](const auto& s) {
                using T = std::decay_t<decltype(s)>;
                if constexpr (std::is_same_v<T, ConvSpec>)
                    out << "conv " << s.maps << " " << s.h1 << " " << s.h2 << " "
                        << to_string(s.act) << "\n";
                else if constexpr (std::is_same_v<T, MaxPoolSpec>)
                    out << "maxpool " << s.p1 << " " << s.p2 << "\n";
                else if constexpr (std::is_same_v<T, DenseSpec>)
                    out << "dense " << s.units << " " << to_string(s.act) << "\n";
                else if constexpr (std::is_same_v<T, DropoutSpec>)
                    out << "dropout " << fmt_double(s.p) << "\n";
                else if constexpr (std::is_same_v<T, DenseDecodeSpec>)
                    out << "dense_decode " << s.tied_to << " " << to_string(s.act) << "\n";
                else if constexpr (std::is_same_v<T, ConvDecodeSpec>)
                    out << "conv_decode " << s.tied_to << " " << to_string(s.act) << "\n";
                else
                    out << "unpool " << s.tied_to << "\n";
            },
            l);
    }
    return out.str();
}

inline NetworkSpec spec_from_text(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    NetworkSpec spec;
    auto next_tokens = [&](const std::string& expect_head) {
        if (!std::getline(in, line)) throw FormatError("spec text: missing '" + expect_head + "'");
        auto toks = split_ws(line);
        if (toks.empty() || toks[0] != expect_head)
            throw FormatError("spec text: expected '" + expect_head + "', got '" + line + "'");
        return toks;
    };

    auto t = next_tokens("task");
    if (t.size() != 2) throw FormatError("spec text: malformed task line");
    spec.task = task_from_string(t[1]);

    t = next_tokens("input");
    if (t.size() != 4) throw FormatError("spec text: malformed input line");
    spec.input_shape = {static_cast<std::size_t>(std::stoul(t[1])),
                        static_cast<std::size_t>(std::stoul(t[2])),
                        static_cast<std::size_t>(std::stoul(t[3]))};

    t = next_tokens("classes");
    if (t.size() != 2) throw FormatError("spec text: malformed classes line");
    spec.num_classes = static_cast<std::size_t>(std::stoul(t[1]));

    t = next_tokens("alpha");
    if (t.size() != 2) throw FormatError("spec text: malformed alpha line");
    spec.alpha_mt = parse_double(t[1]);

    t = next_tokens("reg");
    if (t.size() != 5) throw FormatError("spec text: malformed reg line");
    spec.reg.l2_lambda = parse_double(t[1]);
    spec.reg.prior_lambda = parse_double(t[2]);
    spec.reg.sparsity_coeff = parse_double(t[3]);
    spec.reg.sparsity_target = parse_double(t[4]);

    t = next_tokens("layers");
    if (t.size() != 2) throw FormatError("spec text: malformed layers line");
    const std::size_t n = static_cast<std::size_t>(std::stoul(t[1]));
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::getline(in, line)) throw FormatError("spec text: missing layer " + std::to_string(i));
        auto toks = split_ws(line);
        if (toks.empty()) throw FormatError("spec text: empty layer line");
        const std::string& kind = toks[0];
        if (kind == "conv" && toks.size() == 5)
            spec.layers.push_back(ConvSpec{static_cast<std::size_t>(std::stoul(toks[1])),
                                           static_cast<std::size_t>(std::stoul(toks[2])),
                                           static_cast<std::size_t>(std::stoul(toks[3])),
                                           activation_from_string(toks[4])});
        else if (kind == "maxpool" && toks.size() == 3)
            spec.layers.push_back(MaxPoolSpec{static_cast<std::size_t>(std::stoul(toks[1])),
                                              static_cast<std::size_t>(std::stoul(toks[2]))});
        else if (kind == "dense" && toks.size() == 3)
            spec.layers.push_back(DenseSpec{static_cast<std::size_t>(std::stoul(toks[1])),
                                            activation_from_string(toks[2])});
        else if (kind == "dropout" && toks.size() == 2)
            spec.layers.push_back(DropoutSpec{parse_double(toks[1])});
        else if (kind == "dense_decode" && toks.size() == 3)
            spec.layers.push_back(DenseDecodeSpec{std::stoi(toks[1]), activation_from_string(toks[2])});
        else if (kind == "conv_decode" && toks.size() == 3)
            spec.layers.push_back(ConvDecodeSpec{std::stoi(toks[1]), activation_from_string(toks[2])});
        else if (kind == "unpool" && toks.size() == 2)
            spec.layers.push_back(UnpoolSpec{std::stoi(toks[1])});
        else
            throw FormatError("spec text: malformed layer line '" + line + "'");
    }
    validate_spec(spec);
    return spec;
}

}  // namespace plastic

#endif  // PLASTIC_SERIALIZE_HPP
