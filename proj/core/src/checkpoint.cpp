#include "softshield/checkpoint.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "softshield/errors.hpp"

namespace softshield {

using nlohmann::json;

std::string float_repr(float v) {
  char buf[48];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  uint64_t h = 0xcbf29ce484222325ull;
  char chunk[4096];
  while (in.read(chunk, sizeof chunk) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(chunk[i]);
      h *= 0x100000001b3ull;
    }
  }
  static const char* hex = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[size_t(i)] = hex[h & 0xf];
    h >>= 4;
  }
  return out;
}

namespace {

void append_float_array(std::string& out, const std::vector<float>& data) {
  out += "[";
  for (size_t i = 0; i < data.size(); ++i) {
    if (i) out += ",";
    out += float_repr(data[i]);
  }
  out += "]";
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw IoError("failed while writing '" + path + "'");
}

json parse_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  try {
    json j;
    in >> j;
    return j;
  } catch (const json::parse_error& e) {
    throw ParseError("'" + path + "': " + e.what());
  }
}

void require_kind(const json& j, const std::string& path, const std::string& kind) {
  if (!j.contains("kind") || j["kind"].get<std::string>() != kind) {
    throw CompatError("'" + path + "' is not a " + kind + " checkpoint");
  }
  if (!j.contains("format_version") || j["format_version"].get<int>() != 1) {
    throw CompatError("'" + path + "': unsupported format_version");
  }
}

std::vector<float> read_floats(const json& arr, size_t expected, const std::string& what) {
  if (!arr.is_array() || arr.size() != expected) {
    throw ParseError(what + ": expected " + std::to_string(expected) + " values");
  }
  std::vector<float> out;
  out.reserve(expected);
  for (const auto& v : arr) out.push_back(float(v.get<double>()));
  return out;
}

}  // namespace

void save_model(const std::string& path, const Parameters& params) {
  const ModelConfig& c = params.config;
  std::string out = "{\"format_version\":1,\"kind\":\"model\",\"config\":{";
  out += "\"context_len\":" + std::to_string(c.context_len) + ",";
  out += "\"d_ff\":" + std::to_string(c.d_ff) + ",";
  out += "\"d_model\":" + std::to_string(c.d_model) + ",";
  out += "\"n_heads\":" + std::to_string(c.n_heads) + ",";
  out += "\"n_layers\":" + std::to_string(c.n_layers) + ",";
  out += "\"vocab_size\":" + std::to_string(c.vocab_size);
  out += "},\"tensors\":[";
  bool first = true;
  for (const auto& [name, t] : params.named()) {
    if (!first) out += ",";
    first = false;
    out += "{\"name\":\"" + name + "\",\"shape\":[";
    for (size_t i = 0; i < t->shape().size(); ++i) {
      if (i) out += ",";
      out += std::to_string(t->shape()[i]);
    }
    out += "],\"data\":";
    append_float_array(out, t->data());
    out += "}";
  }
  out += "]}\n";
  write_text(path, out);
}

Parameters load_model(const std::string& path) {
  const json j = parse_file(path);
  require_kind(j, path, "model");
  if (!j.contains("config")) throw ParseError("'" + path + "': missing config");
  const json& jc = j["config"];
  ModelConfig cfg;
  cfg.n_layers = jc.at("n_layers").get<int>();
  cfg.d_model = jc.at("d_model").get<int>();
  cfg.n_heads = jc.at("n_heads").get<int>();
  cfg.d_ff = jc.at("d_ff").get<int>();
  cfg.context_len = jc.at("context_len").get<int>();
  cfg.vocab_size = jc.at("vocab_size").get<int>();
  cfg.validate();

  Parameters params = init_params(cfg, 0);
  auto named = params.named();
  if (!j.contains("tensors") || !j["tensors"].is_array() ||
      j["tensors"].size() != named.size()) {
    throw ParseError("'" + path + "': expected " + std::to_string(named.size()) +
                     " tensors");
  }
  size_t idx = 0;
  for (const auto& jt : j["tensors"]) {
    const std::string name = jt.at("name").get<std::string>();
    if (name != named[idx].first) {
      throw ParseError("'" + path + "': tensor '" + name + "' out of order, expected '" +
                       named[idx].first + "'");
    }
    Tensor* t = named[idx].second;
    const auto& shape = jt.at("shape");
    if (shape.size() != t->shape().size()) {
      throw ParseError("'" + path + "': tensor '" + name + "' has wrong rank");
    }
    for (size_t i = 0; i < shape.size(); ++i) {
      if (shape.at(i).get<int>() != t->shape()[i]) {
        throw ParseError("'" + path + "': tensor '" + name + "' has wrong shape");
      }
    }
    t->data() = read_floats(jt.at("data"), size_t(t->size()), "'" + path + "' " + name);
    ++idx;
  }
  return params;
}

void save_soft_prompt(const std::string& path, const SoftPrompt& prompt) {
  std::string out = "{\"format_version\":1,\"kind\":\"soft_prompt\",";
  out += "\"label\":\"" + prompt.label + "\",";
  out += "\"m\":" + std::to_string(prompt.m()) + ",";
  out += "\"d\":" + std::to_string(prompt.d()) + ",";
  out += "\"config_hash\":\"" + prompt.config_hash + "\",";
  out += "\"data\":";
  append_float_array(out, prompt.matrix.data());
  out += "}\n";
  write_text(path, out);
}

SoftPrompt load_soft_prompt(const std::string& path) {
  const json j = parse_file(path);
  require_kind(j, path, "soft_prompt");
  SoftPrompt p;
  p.label = j.at("label").get<std::string>();
  p.config_hash = j.at("config_hash").get<std::string>();
  const int m = j.at("m").get<int>();
  const int d = j.at("d").get<int>();
  if (m < 1 || d < 1) throw ParseError("'" + path + "': invalid soft prompt shape");
  p.matrix = Tensor::from_data(
      {m, d}, read_floats(j.at("data"), size_t(m) * size_t(d), "'" + path + "' data"));
  return p;
}

void save_router(const std::string& path, const Router& router) {
  std::string out = "{\"format_version\":1,\"kind\":\"router\",";
  out += "\"features\":" + std::to_string(kRouterFeatures) + ",";
  out += "\"classes\":[";
  for (int c = 0; c < kRouterClasses; ++c) {
    if (c) out += ",";
    out += std::string("\"") + kRouterClassNames[size_t(c)] + "\"";
  }
  out += "],";
  {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, router.held_out_accuracy);
    out += "\"held_out_accuracy\":" + std::string(buf, res.ptr) + ",";
  }
  out += "\"weight\":";
  append_float_array(out, router.weight);
  out += ",\"bias\":";
  append_float_array(out, router.bias);
  out += "}\n";
  write_text(path, out);
}

Router load_router(const std::string& path) {
  const json j = parse_file(path);
  require_kind(j, path, "router");
  if (j.at("features").get<int>() != kRouterFeatures) {
    throw CompatError("'" + path + "': unexpected feature count");
  }
  Router r;
  r.weight = read_floats(j.at("weight"), size_t(kRouterClasses) * kRouterFeatures,
                         "'" + path + "' weight");
  r.bias = read_floats(j.at("bias"), kRouterClasses, "'" + path + "' bias");
  r.held_out_accuracy = j.at("held_out_accuracy").get<double>();
  return r;
}

}  // namespace softshield
