#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "dpsim/classify.hpp"
#include "dpsim/core.hpp"
#include "dpsim/highdim.hpp"
#include "dpsim/kde.hpp"
#include "dpsim/l2sq.hpp"
#include "dpsim/onedim.hpp"
#include "dpsim/projections.hpp"
#include "dpsim/smooth.hpp"

namespace dpsim {

// ---------------------------------------------------------------------------
// SketchFile: magic "DPSIM1", version u16, function id u16, u32 header length,
// JSON header (params, seeds, specs), u64 payload count, payload of
// little-endian 8-byte floats. serialize(deserialize(bytes)) == bytes.
// ---------------------------------------------------------------------------

inline constexpr char kSketchMagic[6] = {'D', 'P', 'S', 'I', 'M', '1'};
inline constexpr std::uint16_t kSketchVersion = 1;

enum class FnId : std::uint16_t {
  kL1 = 1,
  kL2 = 2,
  kL2Sq = 3,
  kLpP = 4,
  kGaussKde = 5,
  kExpKde = 6,
  kLaplaceKde = 7,
  kInv1pL2 = 8,
  kInv1pL2sq = 9,
  kInv1pL1 = 10,
  kClassifier = 11,
};

inline std::string fn_name(FnId fn) {
  switch (fn) {
    case FnId::kL1: return "l1";
    case FnId::kL2: return "l2";
    case FnId::kL2Sq: return "l2sq";
    case FnId::kLpP: return "lpp";
    case FnId::kGaussKde: return "gauss-kde";
    case FnId::kExpKde: return "exp-kde";
    case FnId::kLaplaceKde: return "laplace-kde";
    case FnId::kInv1pL2: return "inv1p-l2";
    case FnId::kInv1pL2sq: return "inv1p-l2sq";
    case FnId::kInv1pL1: return "inv1p-l1";
    case FnId::kClassifier: return "classifier";
  }
  return "unknown";
}

inline std::optional<FnId> fn_from_name(const std::string& name) {
  for (std::uint16_t i = 1; i <= 11; ++i) {
    const auto fn = static_cast<FnId>(i);
    if (fn_name(fn) == name) return fn;
  }
  return std::nullopt;
}

// The l2 function stores the public embedding alongside the l1 machinery so
// queries replay the identical map.
struct L2EmbedMeta {
  ProjectionSpec spec;
  double clip = 0.0;
  double original_radius = 0.0;
};

struct L1File {
  L1Structure structure;
  std::optional<L2EmbedMeta> embed;

  mutable std::shared_ptr<const Projector> embed_proj;
  const Projector* embed_projector() const {
    if (!embed) return nullptr;
    if (!embed_proj) embed_proj = std::make_shared<Projector>(embed->spec);
    return embed_proj.get();
  }
};

struct Sketch {
  FnId fn = FnId::kL1;
  std::variant<L1File, NoisyMoments, DpKdeSketch, SmoothKdeSketch, DpClassifier> value;
};

// ---------------------------------------------------------------------------
// JSON helpers
// ---------------------------------------------------------------------------

namespace io_detail {

using nlohmann::json;

inline json projection_to_json(const ProjectionSpec& p) {
  json j;
  j["kind"] = p.kind == ProjectionKind::kGaussianJL ? "gaussian-jl"
              : p.kind == ProjectionKind::kFastJL   ? "fast-jl"
                                                    : "l2-to-l1";
  j["in_dim"] = p.in_dim;
  j["out_dim"] = p.out_dim;
  j["seed"] = p.seed;
  return j;
}

inline ProjectionSpec projection_from_json(const json& j) {
  ProjectionSpec p;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "gaussian-jl") p.kind = ProjectionKind::kGaussianJL;
  else if (kind == "fast-jl") p.kind = ProjectionKind::kFastJL;
  else if (kind == "l2-to-l1") p.kind = ProjectionKind::kL2ToL1;
  else throw std::runtime_error("sketch header: unknown projection kind " + kind);
  p.in_dim = j.at("in_dim").get<std::size_t>();
  p.out_dim = j.at("out_dim").get<std::size_t>();
  p.seed = j.at("seed").get<std::uint64_t>();
  return p;
}

inline std::string kernel_name(KernelId k) {
  switch (k) {
    case KernelId::kGauss: return "gauss";
    case KernelId::kExp: return "exp";
    case KernelId::kLaplace: return "laplace";
    case KernelId::kInv1pL2: return "inv1p-l2";
    case KernelId::kInv1pL2sq: return "inv1p-l2sq";
    case KernelId::kInv1pL1: return "inv1p-l1";
  }
  return "unknown";
}

inline KernelId kernel_from_name(const std::string& name) {
  if (name == "gauss") return KernelId::kGauss;
  if (name == "exp") return KernelId::kExp;
  if (name == "laplace") return KernelId::kLaplace;
  if (name == "inv1p-l2") return KernelId::kInv1pL2;
  if (name == "inv1p-l2sq") return KernelId::kInv1pL2sq;
  if (name == "inv1p-l1") return KernelId::kInv1pL1;
  throw std::runtime_error("sketch header: unknown kernel " + name);
}

inline json kde_header(const DpKdeSketch& sk) {
  json j;
  j["kernel"] = kernel_name(sk.fspec.kernel);
  j["num_features"] = sk.fspec.num_features;
  j["input_dim"] = sk.fspec.input_dim;
  j["seed"] = sk.fspec.seed;
  j["n"] = sk.n;
  j["epsilon"] = sk.epsilon;
  j["alpha"] = sk.alpha;
  j["noise_off"] = sk.noise_off;
  if (sk.projection) j["projection"] = projection_to_json(*sk.projection);
  return j;
}

inline DpKdeSketch kde_from_header(const json& j, std::span<const double> payload) {
  DpKdeSketch sk;
  sk.fspec.kernel = kernel_from_name(j.at("kernel").get<std::string>());
  sk.fspec.num_features = j.at("num_features").get<std::size_t>();
  sk.fspec.input_dim = j.at("input_dim").get<std::size_t>();
  sk.fspec.seed = j.at("seed").get<std::uint64_t>();
  sk.n = j.at("n").get<std::size_t>();
  sk.epsilon = j.at("epsilon").get<double>();
  sk.alpha = j.at("alpha").get<double>();
  sk.noise_off = j.at("noise_off").get<bool>();
  if (j.contains("projection")) sk.projection = projection_from_json(j.at("projection"));
  if (payload.size() != sk.fspec.num_features)
    throw std::runtime_error("sketch payload: feature count mismatch");
  sk.noisy_mean_features.assign(payload.begin(), payload.end());
  return sk;
}

}  // namespace io_detail

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline void sketch_to_parts(const Sketch& s, nlohmann::json& header,
                            std::vector<double>& payload) {
  using io_detail::json;
  using io_detail::projection_to_json;
  header = json::object();
  payload.clear();
  header["fn"] = fn_name(s.fn);

  if (const auto* l1 = std::get_if<L1File>(&s.value)) {
    const L1Structure& st = l1->structure;
    header["dimension"] = st.promise.dimension;
    header["radius"] = st.promise.radius;
    header["epsilon"] = st.budget.epsilon;
    header["delta"] = st.budget.delta;
    header["per_tree_epsilon"] = st.per_tree_epsilon;
    header["alpha"] = st.alpha;
    header["p"] = st.p;
    header["n"] = st.n;
    header["seed"] = st.seed;
    header["noise_off"] = st.noise_off;
    header["clip_count"] = st.clip_count;
    if (!st.trees.empty()) {
      header["tree_depth"] = st.trees.front().depth;
      header["tree_eta"] = st.trees.front().eta;
    }
    if (l1->embed) {
      json e;
      e["projection"] = projection_to_json(l1->embed->spec);
      e["clip"] = l1->embed->clip;
      e["original_radius"] = l1->embed->original_radius;
      header["embed"] = e;
    }
    for (const auto& t : st.trees)
      payload.insert(payload.end(), t.node_values.begin(), t.node_values.end());
  } else if (const auto* m = std::get_if<NoisyMoments>(&s.value)) {
    header["dimension"] = m->promise.dimension;
    header["radius"] = m->promise.radius;
    header["epsilon"] = m->epsilon;
    header["n"] = m->n;
    header["noise_off"] = m->noise_off;
    header["clip_count"] = m->clip_count;
    payload = m->noisy_mean;
    payload.push_back(m->noisy_s);
  } else if (const auto* k = std::get_if<DpKdeSketch>(&s.value)) {
    header.update(io_detail::kde_header(*k));
    header["fn"] = fn_name(s.fn);
    payload = k->noisy_mean_features;
  } else if (const auto* sm = std::get_if<SmoothKdeSketch>(&s.value)) {
    header["kernel"] = io_detail::kernel_name(sm->kernel);
    header["epsilon"] = sm->epsilon;
    header["alpha"] = sm->alpha;
    header["n"] = sm->n;
    header["noise_off"] = sm->noise_off;
    json terms = json::array();
    for (const auto& t : sm->approx.terms) terms.push_back(json::array({t.weight, t.rate}));
    header["approx"] = {{"alpha", sm->approx.alpha}, {"terms", terms}};
    if (sm->projection) header["projection"] = projection_to_json(*sm->projection);
    json subs = json::array();
    for (const auto& sub : sm->subs) {
      subs.push_back(io_detail::kde_header(sub));
      payload.insert(payload.end(), sub.noisy_mean_features.begin(),
                     sub.noisy_mean_features.end());
    }
    header["subs"] = subs;
  } else if (const auto* c = std::get_if<DpClassifier>(&s.value)) {
    header["epsilon"] = c->budget.epsilon;
    header["delta"] = c->budget.delta;
    header["clip"] = c->clip;
    header["input_dim"] = c->input_dim;
    header["noise_off"] = c->noise_off;
    if (c->projection) header["projection"] = projection_to_json(*c->projection);
    json classes = json::array();
    for (std::size_t i = 0; i < c->labels.size(); ++i) {
      classes.push_back({{"label", c->labels[i]}, {"n", c->moments[i].n}});
      payload.insert(payload.end(), c->moments[i].noisy_mean.begin(),
                     c->moments[i].noisy_mean.end());
      payload.push_back(c->moments[i].noisy_s);
    }
    header["classes"] = classes;
    header["moments_dim"] = c->moments.empty() ? 0 : c->moments.front().noisy_mean.size();
  }
}

inline std::vector<std::uint8_t> serialize_sketch(const Sketch& s) {
  nlohmann::json header;
  std::vector<double> payload;
  sketch_to_parts(s, header, payload);
  const std::string header_str = header.dump();

  std::vector<std::uint8_t> out;
  out.reserve(32 + header_str.size() + payload.size() * 8);
  out.insert(out.end(), kSketchMagic, kSketchMagic + 6);
  const auto push_u16 = [&](std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
  };
  const auto push_u32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
  };
  const auto push_u64 = [&](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
  };
  push_u16(kSketchVersion);
  push_u16(static_cast<std::uint16_t>(s.fn));
  push_u32(static_cast<std::uint32_t>(header_str.size()));
  out.insert(out.end(), header_str.begin(), header_str.end());
  push_u64(payload.size());
  for (double d : payload) push_u64(std::bit_cast<std::uint64_t>(d));
  return out;
}

inline Sketch deserialize_sketch(std::span<const std::uint8_t> bytes) {
  using io_detail::json;
  std::size_t pos = 0;
  const auto need = [&](std::size_t k) {
    if (pos + k > bytes.size()) throw std::runtime_error("sketch file: truncated");
  };
  need(6);
  if (std::memcmp(bytes.data(), kSketchMagic, 6) != 0)
    throw std::runtime_error("sketch file: bad magic");
  pos += 6;
  const auto read_u16 = [&] {
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>(bytes[pos] | (bytes[pos + 1] << 8));
    pos += 2;
    return v;
  };
  const auto read_u32 = [&] {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[pos + i]) << (8 * i);
    pos += 4;
    return v;
  };
  const auto read_u64 = [&] {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[pos + i]) << (8 * i);
    pos += 8;
    return v;
  };
  const std::uint16_t version = read_u16();
  if (version != kSketchVersion)
    throw std::runtime_error("sketch file: unsupported version " + std::to_string(version));
  const auto fn = static_cast<FnId>(read_u16());
  if (fn_name(fn) == "unknown") throw std::runtime_error("sketch file: unknown function id");
  const std::uint32_t header_len = read_u32();
  need(header_len);
  const json header = json::parse(bytes.subspan(pos, header_len));
  pos += header_len;
  const std::uint64_t count = read_u64();
  need(count * 8);
  std::vector<double> payload(count);
  for (std::uint64_t i = 0; i < count; ++i) payload[i] = std::bit_cast<double>(read_u64());

  Sketch s;
  s.fn = fn;
  switch (fn) {
    case FnId::kL1:
    case FnId::kL2:
    case FnId::kLpP: {
      L1File f;
      L1Structure& st = f.structure;
      st.promise = DomainPromise{PromiseKind::kBox, header.at("radius").get<double>(),
                                 header.at("dimension").get<std::size_t>()};
      st.budget = PrivacyBudget{header.at("epsilon").get<double>(),
                                header.at("delta").get<double>()};
      st.per_tree_epsilon = header.at("per_tree_epsilon").get<double>();
      st.alpha = header.at("alpha").get<double>();
      st.p = header.at("p").get<double>();
      st.n = header.at("n").get<std::size_t>();
      st.seed = header.at("seed").get<std::uint64_t>();
      st.noise_off = header.at("noise_off").get<bool>();
      st.clip_count = header.at("clip_count").get<std::size_t>();
      if (header.contains("embed")) {
        L2EmbedMeta e;
        e.spec = io_detail::projection_from_json(header.at("embed").at("projection"));
        e.clip = header.at("embed").at("clip").get<double>();
        e.original_radius = header.at("embed").at("original_radius").get<double>();
        f.embed = e;
      }
      const std::size_t d = st.promise.dimension;
      st.trees.resize(d);
      std::size_t off = 0;
      for (std::size_t j = 0; j < d; ++j) {
        NoisyTree& t = st.trees[j];
        t.n = st.n;
        t.grid = t.n + 1;
        t.leaves = std::bit_ceil(t.grid);
        t.depth = std::countr_zero(t.leaves);
        t.epsilon = st.per_tree_epsilon;
        t.eta = 2.0 * static_cast<double>(t.depth + 1) / t.epsilon;
        t.noise_off = st.noise_off;
        const std::size_t count_j = t.node_count();
        if (off + count_j > payload.size())
          throw std::runtime_error("sketch payload: tree data truncated");
        t.node_values.assign(payload.begin() + off, payload.begin() + off + count_j);
        off += count_j;
      }
      if (off != payload.size()) throw std::runtime_error("sketch payload: trailing tree data");
      s.value = std::move(f);
      break;
    }
    case FnId::kL2Sq: {
      NoisyMoments m;
      m.promise = DomainPromise{PromiseKind::kBox, header.at("radius").get<double>(),
                                header.at("dimension").get<std::size_t>()};
      m.epsilon = header.at("epsilon").get<double>();
      m.n = header.at("n").get<std::size_t>();
      m.noise_off = header.at("noise_off").get<bool>();
      m.clip_count = header.at("clip_count").get<std::size_t>();
      if (payload.size() != m.promise.dimension + 1)
        throw std::runtime_error("sketch payload: moments size mismatch");
      m.noisy_mean.assign(payload.begin(), payload.end() - 1);
      m.noisy_s = payload.back();
      s.value = std::move(m);
      break;
    }
    case FnId::kGaussKde:
    case FnId::kExpKde:
    case FnId::kLaplaceKde: {
      s.value = io_detail::kde_from_header(header, payload);
      break;
    }
    case FnId::kInv1pL2:
    case FnId::kInv1pL2sq:
    case FnId::kInv1pL1: {
      SmoothKdeSketch sm;
      sm.kernel = io_detail::kernel_from_name(header.at("kernel").get<std::string>());
      sm.epsilon = header.at("epsilon").get<double>();
      sm.alpha = header.at("alpha").get<double>();
      sm.n = header.at("n").get<std::size_t>();
      sm.noise_off = header.at("noise_off").get<bool>();
      sm.approx.alpha = header.at("approx").at("alpha").get<double>();
      for (const auto& t : header.at("approx").at("terms"))
        sm.approx.terms.push_back(ExpSumTerm{t.at(0).get<double>(), t.at(1).get<double>()});
      if (header.contains("projection"))
        sm.projection = io_detail::projection_from_json(header.at("projection"));
      std::size_t off = 0;
      for (const auto& sub_j : header.at("subs")) {
        const std::size_t D = sub_j.at("num_features").get<std::size_t>();
        if (off + D > payload.size())
          throw std::runtime_error("sketch payload: sub-sketch data truncated");
        sm.subs.push_back(io_detail::kde_from_header(
            sub_j, std::span<const double>(payload.data() + off, D)));
        off += D;
      }
      if (off != payload.size() || sm.subs.size() != sm.approx.terms.size())
        throw std::runtime_error("sketch payload: sub-sketch layout mismatch");
      s.value = std::move(sm);
      break;
    }
    case FnId::kClassifier: {
      DpClassifier c;
      c.budget = PrivacyBudget{header.at("epsilon").get<double>(),
                               header.at("delta").get<double>()};
      c.clip = header.at("clip").get<double>();
      c.input_dim = header.at("input_dim").get<std::size_t>();
      c.noise_off = header.at("noise_off").get<bool>();
      if (header.contains("projection"))
        c.projection = io_detail::projection_from_json(header.at("projection"));
      const std::size_t dim = header.at("moments_dim").get<std::size_t>();
      std::size_t off = 0;
      for (const auto& cls : header.at("classes")) {
        c.labels.push_back(cls.at("label").get<int>());
        NoisyMoments m;
        m.n = cls.at("n").get<std::size_t>();
        m.promise = DomainPromise{PromiseKind::kBox, 2.0 * c.clip, dim};
        m.epsilon = c.budget.epsilon;
        m.noise_off = c.noise_off;
        if (off + dim + 1 > payload.size())
          throw std::runtime_error("sketch payload: classifier data truncated");
        m.noisy_mean.assign(payload.begin() + off, payload.begin() + off + dim);
        m.noisy_s = payload[off + dim];
        off += dim + 1;
        c.moments.push_back(std::move(m));
      }
      if (off != payload.size())
        throw std::runtime_error("sketch payload: trailing classifier data");
      s.value = std::move(c);
      break;
    }
  }
  return s;
}

inline void save_sketch(const Sketch& s, const std::string& path) {
  const auto bytes = serialize_sketch(s);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_sketch: cannot open " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("save_sketch: write failed for " + path);
}

inline Sketch load_sketch(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_sketch: cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return deserialize_sketch(bytes);
}

// ---------------------------------------------------------------------------
// Query dispatch
// ---------------------------------------------------------------------------

inline std::size_t sketch_query_dim(const Sketch& s) {
  if (const auto* l1 = std::get_if<L1File>(&s.value)) {
    return l1->embed ? l1->embed->spec.in_dim : l1->structure.promise.dimension;
  }
  if (const auto* m = std::get_if<NoisyMoments>(&s.value)) return m->promise.dimension;
  if (const auto* k = std::get_if<DpKdeSketch>(&s.value))
    return k->projection ? k->projection->in_dim : k->fspec.input_dim;
  if (const auto* sm = std::get_if<SmoothKdeSketch>(&s.value))
    return sm->projection ? sm->projection->in_dim
                          : (sm->subs.empty() ? 0 : sm->subs.front().fspec.input_dim);
  if (const auto* c = std::get_if<DpClassifier>(&s.value)) return c->input_dim;
  return 0;
}

// One estimate per query row. For the classifier this is the predicted label.
inline double sketch_estimate(const Sketch& s, std::span<const double> y) {
  if (const auto* l1 = std::get_if<L1File>(&s.value)) {
    if (l1->embed) {
      const auto q = embed_l2_point(*l1->embed_projector(), l1->embed->clip, y);
      return query_l1(l1->structure, q);
    }
    return query_lpp(l1->structure, y, l1->structure.p);
  }
  if (const auto* m = std::get_if<NoisyMoments>(&s.value)) return query_l2sq(*m, y);
  if (const auto* k = std::get_if<DpKdeSketch>(&s.value)) return query_kde(*k, y);
  if (const auto* sm = std::get_if<SmoothKdeSketch>(&s.value)) return query_smooth_kde(*sm, y);
  if (const auto* c = std::get_if<DpClassifier>(&s.value))
    return static_cast<double>(predict(*c, y));
  throw std::runtime_error("sketch_estimate: empty sketch");
}

}  // namespace dpsim
