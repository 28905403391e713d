#pragma once

// Model files: magic, version, a JSON header describing the architecture and the parameter
// layout, then the raw little-endian doubles of every parameter in header order, then an
// FNV-1a checksum. Saving the same model twice yields identical bytes.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <type_traits>
#include <vector>

#include "json.hpp"

#include "wlkaf/activations.hpp"
#include "wlkaf/data/dataset.hpp"
#include "wlkaf/errors.hpp"
#include "wlkaf/network.hpp"
#include "wlkaf/real_network.hpp"

namespace wlkaf::io {

using nlohmann::json;

inline constexpr char kModelMagic[8] = {'W', 'L', 'K', 'A', 'F', 'M', 'D', '1'};
inline constexpr std::uint32_t kModelVersion = 1;

inline std::string to_string(act::RealFn f) {
    switch (f) {
        case act::RealFn::Tanh: return "tanh";
        case act::RealFn::Sigmoid: return "sigmoid";
        case act::RealFn::Identity: return "identity";
    }
    return "tanh";
}

inline act::RealFn real_fn_from_string(const std::string& s) {
    if (s == "tanh") return act::RealFn::Tanh;
    if (s == "sigmoid") return act::RealFn::Sigmoid;
    if (s == "identity") return act::RealFn::Identity;
    throw ParameterError("unknown real function '" + s + "'");
}

inline json to_json(const act::ActivationSpec& spec) {
    struct V {
        json operator()(const act::SplitSpec& s) const { return {{"type", "split"}, {"fn", to_string(s.fn)}}; }
        json operator()(const act::PhaseAmplitudeSpec&) const { return {{"type", "phase_amplitude"}}; }
        json operator()(const act::KafSpec& s) const { return {{"type", "kaf"}, {"kernel", kernels::to_string(s.kernel)}}; }
        json operator()(const act::WlKafCase1Spec&) const { return {{"type", "wlkaf_case1"}}; }
        json operator()(const act::WlKafCase2Spec& s) const { return {{"type", "wlkaf_case2"}, {"omegas", s.omegas}}; }
    };
    return std::visit(V{}, spec);
}

inline act::ActivationSpec activation_from_json(const json& j) {
    const std::string type = j.at("type").get<std::string>();
    if (type == "split") return act::SplitSpec{real_fn_from_string(j.at("fn").get<std::string>())};
    if (type == "phase_amplitude") return act::PhaseAmplitudeSpec{};
    if (type == "kaf") return act::KafSpec{kernels::kernel_type_from_string(j.at("kernel").get<std::string>())};
    if (type == "wlkaf_case1") return act::WlKafCase1Spec{};
    if (type == "wlkaf_case2") return act::WlKafCase2Spec{j.at("omegas").get<std::vector<double>>()};
    throw FormatError("unknown activation type '" + type + "'", 0);
}

inline json to_json(const net::NetworkConfig& c) {
    return {{"input_dim", c.input_dim},
            {"hidden", c.hidden},
            {"classes", c.classes},
            {"activation", to_json(c.activation)},
            {"dictionary", {{"points_per_axis", c.dictionary.points_per_axis}, {"lo", c.dictionary.lo}, {"hi", c.dictionary.hi}}},
            {"alpha_init",
             {{"mode", c.alpha_init.mode == act::AlphaInit::Mode::IdentityFit ? "identity_fit" : "random"},
              {"ridge", c.alpha_init.ridge},
              {"random_std", c.alpha_init.random_std}}},
            {"init_gain", c.init_gain},
            {"seed", c.seed}};
}

inline net::NetworkConfig network_config_from_json(const json& j) {
    net::NetworkConfig c;
    c.input_dim = j.at("input_dim").get<std::size_t>();
    c.hidden = j.at("hidden").get<std::vector<std::size_t>>();
    c.classes = j.at("classes").get<std::size_t>();
    c.activation = activation_from_json(j.at("activation"));
    const auto& d = j.at("dictionary");
    c.dictionary = {d.at("points_per_axis").get<std::size_t>(), d.at("lo").get<double>(), d.at("hi").get<double>()};
    const auto& a = j.at("alpha_init");
    c.alpha_init.mode = a.at("mode").get<std::string>() == "random" ? act::AlphaInit::Mode::Random
                                                                     : act::AlphaInit::Mode::IdentityFit;
    c.alpha_init.ridge = a.at("ridge").get<double>();
    c.alpha_init.random_std = a.at("random_std").get<double>();
    c.init_gain = j.value("init_gain", 1.0);
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

template <class M>
inline constexpr const char* model_kind() {
    if constexpr (std::is_same_v<M, net::RealNetwork>) return "real";
    else return "complex";
}

/// Serializes a network's architecture and parameters. `extra` is stored verbatim in the header.
template <class M>
std::vector<std::uint8_t> serialize_model(const M& model, const json& extra = json::object()) {
    auto& m = const_cast<M&>(model);  // parameters() only bumps the cache generation
    const auto views = m.parameters();
    json layout = json::array();
    for (const auto& v : views) layout.push_back({{"name", v.name}, {"reals", v.value.size()}});
    const json header = {{"kind", model_kind<M>()}, {"config", to_json(model.config())}, {"parameters", layout}, {"extra", extra}};
    const std::string text = header.dump();

    data::detail::Writer w;
    w.put_array(kModelMagic, 8);
    w.put(kModelVersion);
    w.put(static_cast<std::uint64_t>(text.size()));
    w.put_array(text.data(), text.size());
    for (const auto& v : views) w.put_array(v.value.data(), v.value.size());
    const auto h = data::fnv1a(w.bytes().data(), w.bytes().size());
    w.put(h);
    return std::move(w.bytes());
}

struct ModelHeader {
    std::string kind;
    net::NetworkConfig config;
    json parameters;
    json extra;
};

namespace detail {

/// Validates framing and checksum and returns the parsed header plus the offset of the parameter block.
inline std::pair<ModelHeader, std::size_t> read_header(const std::vector<std::uint8_t>& bytes, const std::string& what) {
    if (bytes.size() < 20 + 8 || std::memcmp(bytes.data(), kModelMagic, 8) != 0)
        throw FormatError(what + " is not a model file (bad magic)", 0);
    std::uint32_t version;
    std::memcpy(&version, bytes.data() + 8, 4);
    if (version != kModelVersion)
        throw FormatError(what + " has model format version " + std::to_string(version) + ", expected " +
                              std::to_string(kModelVersion),
                          8);
    std::uint64_t stored;
    std::memcpy(&stored, bytes.data() + bytes.size() - 8, 8);
    if (data::fnv1a(bytes.data(), bytes.size() - 8) != stored)
        throw FormatError(what + " failed its checksum", bytes.size() - 8);
    std::uint64_t len;
    std::memcpy(&len, bytes.data() + 12, 8);
    if (len > bytes.size() - 28) throw FormatError(what + " header length overruns the file", 12);
    const std::string text(reinterpret_cast<const char*>(bytes.data() + 20), len);
    json h;
    try {
        h = json::parse(text);
    } catch (const json::exception& e) {
        throw FormatError(what + " has a malformed header: " + e.what(), 20);
    }
    try {
        return {{h.at("kind").get<std::string>(), network_config_from_json(h.at("config")), h.at("parameters"),
                 h.value("extra", json::object())},
                20 + len};
    } catch (const json::exception& e) {
        throw FormatError(what + " header is missing fields: " + e.what(), 20);
    }
}

}  // namespace detail

inline ModelHeader peek_model_header(const std::vector<std::uint8_t>& bytes, const std::string& what = "model") {
    return detail::read_header(bytes, what).first;
}

template <class M>
M deserialize_model(const std::vector<std::uint8_t>& bytes, const std::string& what = "model") {
    auto [header, offset] = detail::read_header(bytes, what);
    if (header.kind != model_kind<M>())
        throw FormatError(what + " holds a " + header.kind + " model, expected " + model_kind<M>(), 20);
    M model(header.config);
    const auto views = model.parameters();
    if (header.parameters.size() != views.size()) throw FormatError(what + " parameter layout does not match", offset);
    for (std::size_t i = 0; i < views.size(); ++i) {
        const auto& entry = header.parameters[i];
        if (entry.at("name").get<std::string>() != views[i].name ||
            entry.at("reals").get<std::size_t>() != views[i].value.size())
            throw FormatError(what + " parameter '" + views[i].name + "' does not match the architecture", offset);
        const std::size_t n = views[i].value.size() * sizeof(double);
        if (offset + n > bytes.size() - 8) throw FormatError(what + " is truncated", offset);
        std::memcpy(views[i].value.data(), bytes.data() + offset, n);
        offset += n;
    }
    if (offset != bytes.size() - 8) throw FormatError(what + " has trailing bytes", offset);
    return model;
}

template <class M>
void save_model(const M& model, const std::filesystem::path& path, const json& extra = json::object()) {
    data::detail::write_file(path, serialize_model(model, extra));
}

template <class M>
M load_model(const std::filesystem::path& path) {
    std::vector<std::uint8_t> bytes;
    try {
        bytes = data::detail::read_file(path);
    } catch (const CacheError& e) {
        throw DataError(e.what());
    }
    return deserialize_model<M>(bytes, path.string());
}

}  // namespace wlkaf::io
