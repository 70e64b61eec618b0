#include <fstream>

#include "sfat/corpus/sfeb.hpp"
#include "sfat/errors.hpp"
#include "sfat/training/training.hpp"

namespace sfat {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kFormat = "sfat-checkpoint";

json shape_json(const Shape& s) { return json(s); }

corpus::Matrix as_matrix(const Shape& shape, std::span<const float> data) {
  corpus::Matrix m(shape.size() == 2 ? shape[0] : 1, shape.empty() ? 1 : shape.back());
  std::copy(data.begin(), data.end(), m.data.begin());
  return m;
}

std::vector<float> read_block(std::istream& in, const std::string& name, const Shape& shape) {
  auto m = corpus::read_sfeb(in);
  if (m.data.size() != shape_numel(shape))
    throw FormatError("checkpoint: block for " + name + " holds " + std::to_string(m.data.size()) + " values, expected " +
                      shape_str(shape));
  return std::move(m.data);
}

}  // namespace

void save_checkpoint(const fs::path& dir, const SfatModel<float>& model, const Adam* optimizer,
                     const TrainState& state, std::uint64_t seed, const json& extra) {
  fs::create_directories(dir);
  json manifest{{"format", kFormat},
                {"version", 1},
                {"model_config", model.config().to_json()},
                {"config", extra},
                {"epoch", state.epoch},
                {"step", state.step},
                {"seed", seed},
                {"params", json::array()}};
  std::ofstream payload(dir / "params.sfeb", std::ios::binary | std::ios::trunc);
  if (!payload) throw DataError("cannot write " + (dir / "params.sfeb").string());
  for (const auto& [name, t] : model.params()) {
    manifest["params"].push_back({{"name", name}, {"shape", shape_json(t.shape())}, {"dtype", "f32"}});
    corpus::write_sfeb(payload, as_matrix(t.shape(), t.data()));
  }
  if (optimizer) {
    json opt{{"steps", optimizer->steps()},
             {"beta1", optimizer->options().beta1},
             {"beta2", optimizer->options().beta2},
             {"eps", optimizer->options().eps},
             {"entries", json::array()}};
    for (const auto& [name, mv] : optimizer->state()) {
      const auto& shape = model.params().get(name).shape();
      for (const auto& [kind, values] : {std::pair{"m", &mv.m}, std::pair{"v", &mv.v}}) {
        opt["entries"].push_back({{"name", std::string("adam.") + kind + "/" + name}, {"shape", shape_json(shape)}, {"dtype", "f32"}});
        corpus::write_sfeb(payload, as_matrix(shape, *values));
      }
    }
    manifest["optimizer"] = std::move(opt);
  }
  payload.close();
  if (!payload) throw DataError("failed writing checkpoint payload in " + dir.string());
  std::ofstream(dir / "manifest.json", std::ios::trunc) << manifest.dump(2) << '\n';
}

Checkpoint load_checkpoint(const fs::path& dir) {
  std::ifstream mf(dir / "manifest.json");
  if (!mf) throw DataError("no checkpoint manifest in " + dir.string());
  json manifest;
  try {
    manifest = json::parse(mf);
  } catch (const json::exception& e) {
    throw ParseError("checkpoint manifest: " + std::string(e.what()));
  }
  if (manifest.value("format", "") != kFormat) throw FormatError("checkpoint manifest: unknown format");

  Checkpoint cp;
  try {
    cp.model_config = ModelConfig::from_json(manifest.at("model_config"));
    cp.extra = manifest.value("config", json::object());
    cp.state = {manifest.at("epoch").get<std::size_t>(), manifest.at("step").get<std::size_t>()};
    cp.seed = manifest.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw ParseError("checkpoint manifest: " + std::string(e.what()));
  }
  cp.model.emplace(cp.model_config, cp.seed);
  auto& params = cp.model->params();

  std::ifstream payload(dir / "params.sfeb", std::ios::binary);
  if (!payload) throw DataError("no params.sfeb in " + dir.string());
  const auto& listed = manifest.at("params");
  if (listed.size() != params.size())
    throw FormatError("checkpoint lists " + std::to_string(listed.size()) + " parameters, model has " + std::to_string(params.size()));
  for (const auto& entry : listed) {
    const auto name = entry.at("name").get<std::string>();
    const auto shape = entry.at("shape").get<Shape>();
    auto& t = params.get(name);
    if (t.shape() != shape) throw FormatError("checkpoint: " + name + " has shape " + shape_str(shape) + ", model expects " + shape_str(t.shape()));
    const auto values = read_block(payload, name, shape);
    std::copy(values.begin(), values.end(), t.mutable_data().begin());
  }
  if (manifest.contains("optimizer")) {
    const auto& o = manifest["optimizer"];
    std::map<std::string, Adam::Moments> state;
    for (const auto& entry : o.at("entries")) {
      const auto full = entry.at("name").get<std::string>();
      const auto slash = full.find('/');
      if (slash == std::string::npos || full.rfind("adam.", 0) != 0) throw FormatError("checkpoint: bad optimizer entry " + full);
      const auto kind = full.substr(5, slash - 5), name = full.substr(slash + 1);
      auto values = read_block(payload, full, entry.at("shape").get<Shape>());
      (kind == "m" ? state[name].m : state[name].v) = std::move(values);
    }
    cp.optimizer.emplace(AdamOptions{o.at("beta1"), o.at("beta2"), o.at("eps")});
    cp.optimizer->restore(o.at("steps").get<std::size_t>(), std::move(state));
  }
  if (payload.peek() != std::char_traits<char>::eof()) throw LengthError("checkpoint: trailing bytes in params.sfeb");
  return cp;
}

}  // namespace sfat
