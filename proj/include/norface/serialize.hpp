#pragma once

#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "norface/nn.hpp"
#include "norface/synthdata.hpp"

namespace norface {

/// Versioned JSON checkpoint of named parameter tensors.
inline void save_checkpoint(const std::string& path, const std::string& kind,
                            const ParamList& params,
                            const std::map<std::string, std::string>& meta = {}) {
    nlohmann::json j;
    j["format_version"] = 1;
    j["kind"] = kind;
    j["meta"] = meta;
    nlohmann::json tensors = nlohmann::json::object();
    for (const auto& [name, p] : params) {
        tensors[name] = {{"shape", p.shape()}, {"data", p.data()}};
    }
    j["tensors"] = std::move(tensors);
    std::ofstream out(path);
    if (!out) throw FormatError("checkpoint: cannot write " + path);
    out << j.dump();
}

/// Loads tensor data into an existing parameter list (same names and shapes).
inline void load_checkpoint(const std::string& path, const std::string& expected_kind,
                            ParamList params) {
    std::ifstream in(path);
    if (!in) throw FormatError("checkpoint: cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("checkpoint: bad JSON in " + path + ": " + e.what());
    }
    if (j.value("format_version", 0) != 1)
        throw FormatError("checkpoint: unsupported format_version in " + path);
    if (j.value("kind", "") != expected_kind)
        throw FormatError("checkpoint: expected kind '" + expected_kind + "', found '" +
                          j.value("kind", "") + "'");
    const auto& tensors = j.at("tensors");
    for (auto& [name, p] : params) {
        if (!tensors.contains(name))
            throw FormatError("checkpoint: missing tensor '" + name + "' in " + path);
        const auto& t = tensors.at(name);
        Shape shape = t.at("shape").get<Shape>();
        if (shape != p.shape())
            throw FormatError("checkpoint: tensor '" + name + "' has shape " + shape_str(shape) +
                              ", expected " + shape_str(p.shape()));
        p.data() = t.at("data").get<std::vector<double>>();
    }
}

inline std::map<std::string, std::string> checkpoint_meta(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("checkpoint: cannot open " + path);
    nlohmann::json j;
    in >> j;
    return j.value("meta", std::map<std::string, std::string>{});
}

namespace detail {

inline nlohmann::json factor_config_to_json(const FactorConfig& c) {
    return {{"n_identities", c.n_identities},
            {"dim_identity", c.dim_identity},
            {"dim_expression", c.dim_expression},
            {"dim_pose", c.dim_pose},
            {"dim_background", c.dim_background},
            {"sample_dim", c.sample_dim},
            {"observation_noise_std", c.observation_noise_std},
            {"identity_scale", c.identity_scale},
            {"pose_scale", c.pose_scale},
            {"background_scale", c.background_scale},
            {"expression_scale", c.expression_scale},
            {"expression_jitter", c.expression_jitter},
            {"au_cooccurrence", c.au_cooccurrence},
            {"nonlinear_mixing", c.nonlinear_mixing},
            {"nonlinear_strength", c.nonlinear_strength}};
}

inline FactorConfig factor_config_from_json(const nlohmann::json& j) {
    FactorConfig c;
    c.n_identities = j.at("n_identities");
    c.dim_identity = j.at("dim_identity");
    c.dim_expression = j.at("dim_expression");
    c.dim_pose = j.at("dim_pose");
    c.dim_background = j.at("dim_background");
    c.sample_dim = j.at("sample_dim");
    c.observation_noise_std = j.at("observation_noise_std");
    c.identity_scale = j.at("identity_scale");
    c.pose_scale = j.at("pose_scale");
    c.background_scale = j.at("background_scale");
    c.expression_scale = j.at("expression_scale");
    c.expression_jitter = j.at("expression_jitter");
    c.au_cooccurrence = j.at("au_cooccurrence");
    c.nonlinear_mixing = j.at("nonlinear_mixing");
    c.nonlinear_strength = j.at("nonlinear_strength");
    return c;
}

inline nlohmann::json sample_to_json(const FactorSample& s, const char* set_name) {
    return {{"set", set_name},
            {"identity_id", s.identity_id},
            {"identity", s.factors.identity},
            {"expression", s.factors.expression},
            {"pose", s.factors.pose},
            {"background", s.factors.background},
            {"observed", s.observed},
            {"label", s.label.values}};
}

inline FactorSample sample_from_json(const nlohmann::json& j, TaskKind kind) {
    FactorSample s;
    s.identity_id = j.at("identity_id");
    s.factors.identity = j.at("identity").get<std::vector<double>>();
    s.factors.expression = j.at("expression").get<std::vector<double>>();
    s.factors.pose = j.at("pose").get<std::vector<double>>();
    s.factors.background = j.at("background").get<std::vector<double>>();
    s.observed = j.at("observed").get<std::vector<double>>();
    s.label.kind = kind;
    s.label.values = j.at("label").get<std::vector<double>>();
    return s;
}

} // namespace detail

/// JSON-lines dataset: a header object carrying the full world state, then
/// one record per sample.
inline void save_dataset(const std::string& path, const SynthDataset& ds) {
    std::ofstream out(path);
    if (!out) throw FormatError("dataset: cannot write " + path);
    nlohmann::json header = {{"format_version", 1},
                             {"kind", "norface-dataset"},
                             {"task", ds.world.task().name()},
                             {"config", detail::factor_config_to_json(ds.world.config())},
                             {"mixing", ds.world.mixing()},
                             {"nonlinear_gain", ds.world.nonlinear_gain()},
                             {"identity_table", ds.world.identity_table()},
                             {"prototypes", ds.world.prototypes()}};
    out << header.dump() << "\n";
    for (const auto& s : ds.train) out << detail::sample_to_json(s, "train").dump() << "\n";
    for (const auto& s : ds.test) out << detail::sample_to_json(s, "test").dump() << "\n";
}

inline SynthDataset load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("dataset: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw FormatError("dataset: empty file " + path);
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("dataset: bad header in " + path + ": " + e.what());
    }
    if (header.value("format_version", 0) != 1 || header.value("kind", "") != "norface-dataset")
        throw FormatError("dataset: unrecognized header in " + path);

    TaskSpec task = TaskSpec::from_name(header.at("task"));
    FactorWorld world = FactorWorld::from_state(
        detail::factor_config_from_json(header.at("config")), task,
        header.at("mixing").get<std::vector<double>>(),
        header.at("nonlinear_gain").get<std::vector<double>>(),
        header.at("identity_table").get<std::vector<std::vector<double>>>(),
        header.at("prototypes").get<std::vector<std::vector<double>>>());

    SynthDataset ds{std::move(world), {}, {}};
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("dataset: bad record at line " + std::to_string(lineno) + ": " +
                              e.what());
        }
        FactorSample s = detail::sample_from_json(j, task.kind);
        if (j.value("set", "") == "train") ds.train.push_back(std::move(s));
        else if (j.value("set", "") == "test") ds.test.push_back(std::move(s));
        else throw FormatError("dataset: record without a valid 'set' at line " +
                               std::to_string(lineno));
    }
    return ds;
}

} // namespace norface
