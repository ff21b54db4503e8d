#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "jopkit/emulator.hpp"
#include "jopkit/gadgets.hpp"
#include "jopkit/payload.hpp"
#include "jopkit/planner.hpp"

namespace jopkit {

using Json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

std::string canonical_dump(const Json& doc);
void write_text_file(const std::string& path, const std::string& text);
void write_binary_file(const std::string& path,
                       const std::vector<uint8_t>& bytes);
Json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const Json& doc);

std::string bytes_to_hex(const std::vector<uint8_t>& bytes);
std::vector<uint8_t> hex_to_bytes(const std::string& hex);

Json candidate_to_json(const GadgetCandidate& c);
GadgetCandidate candidate_from_json(const Json& j);

Json dispatcher_to_json(const DispatcherGadget& d);
DispatcherGadget dispatcher_from_json(const Json& j);

Json goal_to_json(const ChainGoal& g);
ChainGoal goal_from_json(const Json& j);

Json vuln_to_json(const VulnSpec& v);
VulnSpec vuln_from_json(const Json& j);

struct CatalogDoc {
  std::string input;
  ScanOptions options;
  std::vector<GadgetCandidate> candidates;
  std::vector<DispatcherGadget> dispatchers;
  std::vector<GadgetCandidate> initializers;
  int chosen_dispatcher = -1;
};

Json catalog_to_json(const CatalogDoc& doc);
CatalogDoc catalog_from_json(const Json& j);

Json plan_to_json(const ChainPlan& plan, const std::string& input);
ChainPlan plan_from_json(const Json& j);

Json payload_to_json(const Payload& p, const DispatchTable& t);
struct PayloadDoc {
  Payload payload;
  DispatchTable table;
};
PayloadDoc payload_from_json(const Json& j);

Json verdict_to_json(const Verdict& v,
                     const std::vector<TraceSegment>& segments);

Json make_report(const Json& catalog, const Json& plan, const Json& payload,
                 const Json* verdict);

}  // namespace jopkit
