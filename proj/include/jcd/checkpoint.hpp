#pragma once

#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "jcd/data.hpp"
#include "jcd/errors.hpp"
#include "jcd/model.hpp"

// Parameter checkpoint: a flat container of named float32 tensors behind a
// JSON header carrying the model config and ablation flags.
//
// Layout (integers little-endian):
//   offset  0: magic "JCDC"
//   offset  4: version, u16 (currently 1)
//   offset  6: header length, u32
//   offset 10: JSON header (UTF-8)
//   then:      concatenated float32 payloads in header tensor order
//
// Header: {"config": {...}, "flags": {...},
//          "tensors": [{"name": "...", "shape": [...]}, ...]}

namespace jcd {

constexpr uint16_t kCheckpointVersion = 1;

namespace detail {

inline nlohmann::json model_config_to_json(const ModelConfig& c) {
    return {{"feature_dim", c.feature_dim},   {"hidden_dim", c.hidden_dim},
            {"num_classes", c.num_classes},   {"snippets_train", c.snippets_train},
            {"conv_kernel", c.conv_kernel},   {"dropout_rate", c.dropout_rate}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.feature_dim = j.value("feature_dim", c.feature_dim);
    c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
    c.num_classes = j.value("num_classes", c.num_classes);
    c.snippets_train = j.value("snippets_train", c.snippets_train);
    c.conv_kernel = j.value("conv_kernel", c.conv_kernel);
    c.dropout_rate = j.value("dropout_rate", c.dropout_rate);
    return c;
}

inline nlohmann::json flags_to_json(const AblationFlags& f) {
    return {{"use_cad", f.use_cad},
            {"cad_supervised", f.cad_supervised},
            {"use_tea", f.use_tea},
            {"use_l_supp_mil", f.use_l_supp_mil},
            {"use_l_supp_coarse", f.use_l_supp_coarse},
            {"use_l_norm", f.use_l_norm},
            {"use_l_guide", f.use_l_guide},
            {"use_l_cas", f.use_l_cas}};
}

inline AblationFlags flags_from_json(const nlohmann::json& j) {
    AblationFlags f;
    f.use_cad = j.value("use_cad", f.use_cad);
    f.cad_supervised = j.value("cad_supervised", f.cad_supervised);
    f.use_tea = j.value("use_tea", f.use_tea);
    f.use_l_supp_mil = j.value("use_l_supp_mil", f.use_l_supp_mil);
    f.use_l_supp_coarse = j.value("use_l_supp_coarse", f.use_l_supp_coarse);
    f.use_l_norm = j.value("use_l_norm", f.use_l_norm);
    f.use_l_guide = j.value("use_l_guide", f.use_l_guide);
    f.use_l_cas = j.value("use_l_cas", f.use_l_cas);
    return f;
}

} // namespace detail

template <typename Real>
void save_checkpoint(const std::string& path, ModelParams<Real>& params) {
    nlohmann::json header;
    header["config"] = detail::model_config_to_json(params.cfg);
    header["flags"] = detail::flags_to_json(params.flags);
    header["tensors"] = nlohmann::json::array();
    for (auto& [name, t] : params.named())
        header["tensors"].push_back({{"name", name}, {"shape", t->shape()}});
    const std::string hdr = header.dump();

    std::string prefix = "JCDC";
    detail::put_u16(prefix, kCheckpointVersion);
    detail::put_u32(prefix, static_cast<uint32_t>(hdr.size()));

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("checkpoint: cannot open for writing: " + path);
    out.write(prefix.data(), static_cast<std::streamsize>(prefix.size()));
    out.write(hdr.data(), static_cast<std::streamsize>(hdr.size()));
    for (auto& [name, t] : params.named()) {
        std::vector<float> buf(t->size());
        for (size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(t->values()[i]);
        out.write(reinterpret_cast<const char*>(buf.data()),
                  static_cast<std::streamsize>(buf.size() * sizeof(float)));
    }
    if (!out) throw FormatError("checkpoint: write failed: " + path);
}

template <typename Real>
ModelParams<Real> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("checkpoint: cannot open: " + path);
    std::string raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto* p = reinterpret_cast<const unsigned char*>(raw.data());
    if (raw.size() < 10 || std::memcmp(p, "JCDC", 4) != 0)
        throw FormatError("checkpoint: bad magic: " + path);
    if (detail::get_u16(p + 4) != kCheckpointVersion)
        throw FormatError("checkpoint: unsupported version: " + path);
    const uint32_t hdr_len = detail::get_u32(p + 6);
    if (raw.size() < 10 + static_cast<size_t>(hdr_len))
        throw FormatError("checkpoint: truncated header: " + path);

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(raw.substr(10, hdr_len));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("checkpoint: invalid header JSON: " + std::string(e.what()));
    }
    const auto cfg = detail::model_config_from_json(header.at("config"));
    const auto flags = detail::flags_from_json(header.at("flags"));
    Rng dummy(0);
    auto params = ModelParams<Real>::init(cfg, flags, dummy);

    std::map<std::string, Tensor<Real>*> by_name;
    for (auto& [name, t] : params.named()) by_name[name] = t;

    size_t offset = 10 + hdr_len;
    std::set<std::string> seen;
    for (const auto& jt : header.at("tensors")) {
        const std::string name = jt.at("name").get<std::string>();
        const auto shape = jt.at("shape").get<std::vector<int>>();
        auto it = by_name.find(name);
        if (it == by_name.end())
            throw FormatError("checkpoint: unexpected tensor '" + name + "' for these flags");
        if (it->second->shape() != shape) {
            throw FormatError("checkpoint: tensor '" + name + "' has shape " +
                              detail::shape_str(shape) + ", expected " +
                              detail::shape_str(it->second->shape()));
        }
        const size_t count = it->second->size();
        if (offset + count * sizeof(float) > raw.size())
            throw FormatError("checkpoint: payload truncated at tensor '" + name + "'");
        std::vector<float> buf(count);
        std::memcpy(buf.data(), raw.data() + offset, count * sizeof(float));
        offset += count * sizeof(float);
        for (size_t i = 0; i < count; ++i) {
            if (!std::isfinite(buf[i]))
                throw DataError("checkpoint: non-finite value in tensor '" + name + "'");
            it->second->values()[i] = static_cast<Real>(buf[i]);
        }
        seen.insert(name);
    }
    for (auto& [name, t] : by_name)
        if (!seen.count(name)) throw FormatError("checkpoint: missing tensor '" + name + "'");
    if (offset != raw.size())
        throw FormatError("checkpoint: trailing bytes after payload: " + path);
    return params;
}

} // namespace jcd
