#include "sparsing/recognize.hpp"

#include <string>

#include "sparsing/io.hpp"
#include "sparsing/mask.hpp"

namespace sparsing {

std::string_view to_string(Method m) {
  switch (m) {
    case Method::Dense: return "dense";
    case Method::ZeroReLU: return "zero";
    case Method::TopK: return "topk";
    case Method::FAT: return "fat";
    case Method::CETT: return "cett";
  }
  return "unknown";
}

Method parse_method(std::string_view name) {
  if (name == "dense") return Method::Dense;
  if (name == "zero" || name == "relu") return Method::ZeroReLU;
  if (name == "topk" || name == "top-k") return Method::TopK;
  if (name == "fat") return Method::FAT;
  if (name == "cett") return Method::CETT;
  throw ConfigError("unknown recognition method '" + std::string(name) +
                    "' (expected dense, zero, topk, fat or cett)");
}

std::string MaskConfig::describe() const {
  std::string out(to_string(method));
  switch (method) {
    case Method::Dense:
    case Method::ZeroReLU:
      break;
    case Method::TopK:
      out += " k=" + std::to_string(static_cast<long>(param));
      break;
    case Method::FAT:
      out += " eps=" + io::format_double(param);
      break;
    case Method::CETT:
      out += " target=" + io::format_double(param) + " eps=[";
      for (std::size_t i = 0; i < layer_thresholds.size(); ++i) {
        if (i) out += ",";
        out += io::format_double(layer_thresholds[i]);
      }
      out += "]";
      break;
  }
  return out;
}

}  // namespace sparsing
