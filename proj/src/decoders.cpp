#include "sceneprior/decoders.hpp"

#include <algorithm>

namespace sceneprior {

void DecoderConfig::validate() const {
  if (num_classes < 2) throw Error("bad-config", "num_classes must include void plus one class");
  if (trunk.empty() || shape_hidden.empty())
    throw Error("bad-config", "trunk and shape widths must be nonempty");
}

DecoderConfig DecoderConfig::full_scale(std::size_t num_classes) {
  return {num_classes, {1024, 512}, {1024, 512}};
}

nlohmann::json to_json(const DecoderConfig& c) {
  return {{"num_classes", c.num_classes}, {"trunk", c.trunk}, {"shape_hidden", c.shape_hidden}};
}

DecoderConfig decoder_config_from_json(const nlohmann::json& j) {
  DecoderConfig c;
  c.num_classes = j.value("num_classes", c.num_classes);
  c.trunk = j.value("trunk", c.trunk);
  c.shape_hidden = j.value("shape_hidden", c.shape_hidden);
  c.validate();
  return c;
}

Decoders::Decoders(const DecoderConfig& config, std::size_t d_model, ParamStore& store, Rng& rng)
    : config_(config) {
  config_.validate();
  std::vector<std::size_t> trunk_widths{d_model};
  trunk_widths.insert(trunk_widths.end(), config_.trunk.begin(), config_.trunk.end());
  trunk_ = Mlp(store, "dec.trunk", trunk_widths, rng);
  const std::size_t feat = trunk_widths.back();
  head_ = Linear(store, "dec.layout_head", feat, config_.num_classes + 7, rng);
  std::vector<std::size_t> shape_widths{feat + 3};
  shape_widths.insert(shape_widths.end(), config_.shape_hidden.begin(), config_.shape_hidden.end());
  shape_widths.push_back(3);
  shape_ = Mlp(store, "dec.shape", shape_widths, rng);
  // Offsets start at zero so stage 2 begins from the stage-1 geometry.
  const Linear& last = shape_.layers().back();
  std::fill(last.weight().values.begin(), last.weight().values.end(), 0.0);
  std::fill(last.bias().values.begin(), last.bias().values.end(), 0.0);
}

LayoutVars Decoders::decode_layout(ad::Var features) const {
  LayoutVars out;
  out.trunk = ad::relu(trunk_.forward(features));
  ad::Var head = head_.forward(out.trunk);
  const std::size_t nc = config_.num_classes;
  out.logits = ad::slice_cols(head, 0, nc);
  out.size = ad::softplus(ad::slice_cols(head, nc + 3, 3));
  ad::Var half_height = ad::scale(ad::slice_cols(out.size, 1, 1), 0.5);
  ad::Var lifted_y = ad::add(ad::relu(ad::slice_cols(head, nc + 1, 1)), half_height);
  out.center = ad::concat_cols({ad::slice_cols(head, nc, 1), lifted_y, ad::slice_cols(head, nc + 2, 1)});
  out.completeness_logit = ad::slice_cols(head, nc + 6, 1);
  out.completeness = ad::sigmoid(out.completeness_logit);
  return out;
}

ad::Var Decoders::decode_shape(const LayoutVars& layout, std::size_t row, const Mesh& templ,
                               bool enabled) const {
  ad::Tape& tape = layout.trunk.tape();
  const std::size_t nv = templ.vertices.size();
  if (!enabled) return tape.constant(nv, 3, std::vector<double>(nv * 3, 0.0));
  std::vector<double> verts;
  verts.reserve(nv * 3);
  for (const Vec3& v : templ.vertices) verts.insert(verts.end(), v.begin(), v.end());
  ad::Var feat = ad::tile_rows(ad::slice_rows(layout.trunk, row, 1), nv);
  return shape_.forward(ad::concat_cols({feat, tape.constant(nv, 3, std::move(verts))}));
}

ad::Var Decoders::world_vertices(const LayoutVars& layout, std::size_t row, const Mesh& templ,
                                 ad::Var offsets) const {
  ad::Tape& tape = offsets.tape();
  const std::size_t nv = templ.vertices.size();
  std::vector<double> verts;
  verts.reserve(nv * 3);
  for (const Vec3& v : templ.vertices) verts.insert(verts.end(), v.begin(), v.end());
  ad::Var canonical = ad::add(tape.constant(nv, 3, std::move(verts)), offsets);
  ad::Var half = ad::scale(ad::slice_rows(layout.size, row, 1), 0.5);
  return ad::add(ad::mul(canonical, half), ad::slice_rows(layout.center, row, 1));
}

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

ObjectInstance assemble_object(const LayoutVars& layout, std::size_t row, const Mesh& templ,
                               ad::Var offsets) {
  ObjectInstance obj;
  const std::size_t nc = layout.logits.cols();
  std::vector<double> logits(nc);
  for (std::size_t c = 0; c < nc; ++c) logits[c] = layout.logits.at(row, c);
  obj.label = static_cast<int>(argmax(logits));
  for (std::size_t i = 0; i < 3; ++i) {
    obj.center[i] = layout.center.at(row, i);
    obj.size[i] = layout.size.at(row, i);
  }
  obj.mesh.faces = templ.faces;
  obj.mesh.vertices = templ.vertices;
  for (std::size_t v = 0; v < templ.vertices.size(); ++v)
    for (std::size_t i = 0; i < 3; ++i) obj.mesh.vertices[v][i] += offsets.at(v, i);
  return obj;
}

}  // namespace sceneprior
