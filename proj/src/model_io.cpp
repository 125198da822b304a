#include "fdivmin/model_io.hpp"

#include <fstream>
#include <json.hpp>

#include "fdivmin/errors.hpp"

namespace fdivmin {

using nlohmann::json;

std::string params_to_json(const ParameterSet& ps) {
  json doc;
  doc["format"] = "fdivmin-params-v1";
  json items = json::array();
  for (const auto& e : ps.entries()) {
    json item;
    item["name"] = e.name;
    item["role"] = role_name(e.role);
    item["shape"] = e.value.shape();
    item["data"] = e.value.raw();
    items.push_back(std::move(item));
  }
  doc["params"] = std::move(items);
  return doc.dump(2);
}

ParameterSet params_from_json(const std::string& json_text) {
  json doc = json::parse(json_text);
  if (doc.value("format", "") != "fdivmin-params-v1")
    throw ContractViolation("params_from_json: unknown format");
  ParameterSet ps;
  for (const auto& item : doc.at("params")) {
    std::string role_str = item.at("role").get<std::string>();
    Role role = role_str == "theta" ? Role::theta : Role::phi;
    Tensor t(item.at("shape").get<std::vector<std::size_t>>(),
             item.at("data").get<std::vector<double>>());
    ps.add(item.at("name").get<std::string>(), std::move(t), role);
  }
  return ps;
}

void save_params_json(const ParameterSet& ps, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw ContractViolation("save_params_json: cannot open " + path);
  f << params_to_json(ps);
}

ParameterSet load_params_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ContractViolation("load_params_json: cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());
  return params_from_json(text);
}

}  // namespace fdivmin
