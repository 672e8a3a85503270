#include "capsrel/model.hpp"

namespace capsrel {

std::string to_string(HeadKind k) {
  switch (k) {
    case HeadKind::kCapsule: return "capsule";
    case HeadKind::kMax: return "max";
    case HeadKind::kAvg: return "avg";
    case HeadKind::kAtt: return "att";
  }
  return "?";
}

std::string to_string(RoutingKind k) {
  return k == RoutingKind::kAttentive ? "attentive" : "dynamic";
}

std::string to_string(LossKind k) { return k == LossKind::kSliding ? "sliding" : "fixed"; }

HeadKind head_kind_from(const std::string& s) {
  if (s == "capsule") return HeadKind::kCapsule;
  if (s == "max") return HeadKind::kMax;
  if (s == "avg") return HeadKind::kAvg;
  if (s == "att") return HeadKind::kAtt;
  throw ConfigError("unknown head kind \"" + s + "\"");
}

RoutingKind routing_kind_from(const std::string& s) {
  if (s == "attentive") return RoutingKind::kAttentive;
  if (s == "dynamic") return RoutingKind::kDynamic;
  throw ConfigError("unknown routing kind \"" + s + "\"");
}

LossKind loss_kind_from(const std::string& s) {
  if (s == "sliding") return LossKind::kSliding;
  if (s == "fixed") return LossKind::kFixed;
  throw ConfigError("unknown loss kind \"" + s + "\"");
}

}  // namespace capsrel
