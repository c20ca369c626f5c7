#include "dynanet/objectives.hpp"

namespace dynanet {

std::string_view term_kind_name(TermKind kind) {
  switch (kind) {
    case TermKind::Content: return "content";
    case TermKind::Style: return "style";
    case TermKind::L1Pixel: return "l1";
    case TermKind::MSEPixel: return "mse";
  }
  return "?";
}

TermKind parse_term_kind(std::string_view name) {
  for (auto kind : {TermKind::Content, TermKind::Style, TermKind::L1Pixel, TermKind::MSEPixel}) {
    if (term_kind_name(kind) == name) return kind;
  }
  throw ConfigError("unknown loss term kind '" + std::string(name) + "'");
}

void Objective::validate() const {
  if (terms.empty()) throw ConfigError("objective needs at least one term");
  for (const auto& t : terms) {
    if (!std::isfinite(t.weight) || t.weight < 0.0) {
      throw ConfigError("objective weights must be finite and non-negative, got " + std::to_string(t.weight));
    }
  }
}

Objective style_transfer_objective(double lambda, const std::string& style_target, const std::string& content_target) {
  Objective o{{Term{TermKind::Content, 1.0, content_target}, Term{TermKind::Style, lambda, style_target}}};
  o.validate();
  return o;
}

}  // namespace dynanet
