#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mtopt/model.hpp"

namespace mtopt {

namespace detail {

inline double require_number(const nlohmann::json& j, const std::string& key,
                             const std::string& ctx) {
  if (!j.contains(key) || !j[key].is_number())
    throw ParseError(ctx + ": missing or non-numeric field '" + key + "'");
  return j[key].get<double>();
}

}  // namespace detail

/// Collect every violated invariant; empty result means the model is valid.
inline std::vector<std::string> validation_errors(const MusculoskeletalModel& model) {
  std::vector<std::string> errs = model.skeleton.validation_errors();
  const int ndof = model.skeleton.dof_count();

  if (model.muscles.empty()) errs.push_back("model must define at least one muscle");
  if (model.actuated_dofs.empty())
    errs.push_back("model must list at least one actuated DOF");
  for (int d : model.actuated_dofs)
    if (d < 0 || d >= ndof)
      errs.push_back("actuated DOF " + std::to_string(d) + " out of range");

  for (const auto& mtu : model.muscles) {
    const std::string id = "muscle '" + mtu.name + "'";
    if (!(mtu.f_o > 0)) errs.push_back(id + ": optimal fiber force must be positive");
    if (!(mtu.l_o > 0)) errs.push_back(id + ": optimal fiber length must be positive");
    if (mtu.tendon_slack < 0) errs.push_back(id + ": tendon slack must be non-negative");
    if (mtu.alpha_o < 0 || mtu.alpha_o >= 1.5707963267948966)
      errs.push_back(id + ": pennation must lie in [0, pi/2)");
    if (mtu.path.empty()) errs.push_back(id + ": path must span at least one DOF");
    for (const auto& t : mtu.path)
      if (t.dof < 0 || t.dof >= ndof)
        errs.push_back(id + ": path references DOF " + std::to_string(t.dof) +
                       " which does not exist on a " + std::to_string(ndof) +
                       "-DOF chain");
    if (!mtu.curves.valid()) errs.push_back(id + ": invalid curve parameters");
  }

  // every actuated DOF must be spanned by at least one muscle
  for (int i = 0; i < model.actuated_count(); ++i) {
    const int dof = model.actuated_dofs[i];
    bool spanned = false;
    for (const auto& mtu : model.muscles)
      for (const auto& t : mtu.path)
        if (t.dof == dof) spanned = true;
    if (!spanned)
      errs.push_back("actuated DOF " + std::to_string(dof) +
                     " is not spanned by any muscle");
  }
  return errs;
}

inline void validate_model(const MusculoskeletalModel& model) {
  const auto errs = validation_errors(model);
  if (errs.empty()) return;
  std::ostringstream msg;
  msg << "model validation failed:";
  for (const auto& e : errs) msg << "\n  - " << e;
  throw ValidationError(msg.str());
}

inline nlohmann::json model_to_json(const MusculoskeletalModel& model) {
  nlohmann::json j;
  nlohmann::json links = nlohmann::json::array();
  for (const auto& L : model.skeleton.links)
    links.push_back({{"mass", L.mass},
                     {"com_offset", L.com_offset},
                     {"inertia", L.inertia},
                     {"length", L.length}});
  j["skeleton"] = {
      {"links", links},
      {"base", model.skeleton.base == BaseType::Floating2d ? "floating-2d" : "pinned"},
      {"gravity", model.skeleton.gravity}};
  if (model.skeleton.passive_damping.size() > 0) {
    std::vector<double> d(model.skeleton.passive_damping.data(),
                          model.skeleton.passive_damping.data() +
                              model.skeleton.passive_damping.size());
    j["skeleton"]["passive_damping"] = d;
  }
  nlohmann::json muscles = nlohmann::json::array();
  for (const auto& m : model.muscles) {
    nlohmann::json jm;
    jm["name"] = m.name;
    jm["f_o"] = m.f_o;
    jm["l_o"] = m.l_o;
    jm["tendon_slack"] = m.tendon_slack;
    jm["alpha_o"] = m.alpha_o;
    jm["l_mt_ref"] = m.l_mt_ref;
    nlohmann::json path = nlohmann::json::object();
    for (const auto& t : m.path)
      path[std::to_string(t.dof)] = {t.coeffs[0], t.coeffs[1], t.coeffs[2], t.coeffs[3]};
    jm["path"] = path;
    const CurveParams def;
    const auto& c = m.curves;
    if (c.gaussian_width != def.gaussian_width ||
        c.max_eccentric_gain != def.max_eccentric_gain ||
        c.shortening_curvature != def.shortening_curvature ||
        c.lengthening_curvature != def.lengthening_curvature ||
        c.passive_exponent != def.passive_exponent ||
        c.passive_strain != def.passive_strain ||
        c.max_contraction_velocity != def.max_contraction_velocity) {
      jm["curves"] = {{"gaussian_width", c.gaussian_width},
                      {"max_eccentric_gain", c.max_eccentric_gain},
                      {"shortening_curvature", c.shortening_curvature},
                      {"lengthening_curvature", c.lengthening_curvature},
                      {"passive_exponent", c.passive_exponent},
                      {"passive_strain", c.passive_strain},
                      {"max_contraction_velocity", c.max_contraction_velocity}};
    }
    muscles.push_back(jm);
  }
  j["muscles"] = muscles;
  j["actuated_dofs"] = model.actuated_dofs;
  return j;
}

/// Content fingerprint over the canonical serialization; identifies the model
/// in dataset and network files.
inline uint64_t model_fingerprint(const MusculoskeletalModel& model) {
  return fnv1a64(model_to_json(model).dump());
}

inline MusculoskeletalModel model_from_json(const nlohmann::json& j) {
  MusculoskeletalModel model;
  if (!j.contains("skeleton")) throw ParseError("model: missing 'skeleton'");
  const auto& js = j["skeleton"];
  if (!js.contains("links") || !js["links"].is_array())
    throw ParseError("skeleton: missing 'links' array");
  for (size_t k = 0; k < js["links"].size(); ++k) {
    const auto& jl = js["links"][k];
    const std::string ctx = "skeleton link " + std::to_string(k);
    RigidLink L;
    L.mass = detail::require_number(jl, "mass", ctx);
    L.com_offset = detail::require_number(jl, "com_offset", ctx);
    L.inertia = detail::require_number(jl, "inertia", ctx);
    L.length = detail::require_number(jl, "length", ctx);
    model.skeleton.links.push_back(L);
  }
  const std::string base = js.value("base", "pinned");
  if (base == "pinned") {
    model.skeleton.base = BaseType::Pinned;
  } else if (base == "floating-2d") {
    model.skeleton.base = BaseType::Floating2d;
  } else {
    throw ParseError("skeleton: unknown base type '" + base + "'");
  }
  model.skeleton.gravity = js.value("gravity", 9.8);
  if (js.contains("passive_damping")) {
    const auto d = js["passive_damping"].get<std::vector<double>>();
    model.skeleton.passive_damping =
        Eigen::Map<const VectorXd>(d.data(), static_cast<long>(d.size()));
  }

  if (!j.contains("muscles") || !j["muscles"].is_array())
    throw ParseError("model: missing 'muscles' array");
  for (const auto& jm : j["muscles"]) {
    MuscleTendonUnit m;
    m.name = jm.value("name", "unnamed");
    const std::string ctx = "muscle '" + m.name + "'";
    m.f_o = detail::require_number(jm, "f_o", ctx);
    m.l_o = detail::require_number(jm, "l_o", ctx);
    m.tendon_slack = detail::require_number(jm, "tendon_slack", ctx);
    m.alpha_o = detail::require_number(jm, "alpha_o", ctx);
    m.l_mt_ref = detail::require_number(jm, "l_mt_ref", ctx);
    if (!jm.contains("path") || !jm["path"].is_object())
      throw ParseError(ctx + ": missing 'path' object");
    for (const auto& [key, val] : jm["path"].items()) {
      MomentArmTerm t;
      try {
        t.dof = std::stoi(key);
      } catch (const std::exception&) {
        throw ParseError(ctx + ": path key '" + key + "' is not a DOF index");
      }
      if (!val.is_array() || val.empty() || val.size() > 4)
        throw ParseError(ctx + ": path coefficients must be an array of 1..4 numbers");
      for (size_t i = 0; i < val.size(); ++i) t.coeffs[i] = val[i].get<double>();
      m.path.push_back(t);
    }
    if (jm.contains("curves")) {
      const auto& jc = jm["curves"];
      m.curves.gaussian_width = jc.value("gaussian_width", m.curves.gaussian_width);
      m.curves.max_eccentric_gain = jc.value("max_eccentric_gain", m.curves.max_eccentric_gain);
      m.curves.shortening_curvature =
          jc.value("shortening_curvature", m.curves.shortening_curvature);
      m.curves.lengthening_curvature =
          jc.value("lengthening_curvature", m.curves.lengthening_curvature);
      m.curves.passive_exponent = jc.value("passive_exponent", m.curves.passive_exponent);
      m.curves.passive_strain = jc.value("passive_strain", m.curves.passive_strain);
      m.curves.max_contraction_velocity =
          jc.value("max_contraction_velocity", m.curves.max_contraction_velocity);
    }
    model.muscles.push_back(std::move(m));
  }

  if (!j.contains("actuated_dofs"))
    throw ParseError("model: missing 'actuated_dofs'");
  model.actuated_dofs = j["actuated_dofs"].get<std::vector<int>>();
  return model;
}

inline MusculoskeletalModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open model file: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("model parse error in ") + path + ": " + e.what());
  }
  MusculoskeletalModel model = model_from_json(j);
  validate_model(model);
  return model;
}

}  // namespace mtopt
