#include "absa/ingest.hpp"

#include <map>

#include "absa/data.hpp"

namespace absa {

const std::vector<ReferenceCounts>& reference_counts() {
  static const std::vector<ReferenceCounts> table = {
      {"LPT14", "train", Task::kAe, {"Laptop_Train_v2.xml", "Laptops_Train_v2.xml", "Laptops_Train.xml"}, {3045, 2358}},
      {"LPT14", "test", Task::kAe, {"Laptops_Test_Gold.xml", "Laptop_Test_Gold.xml"}, {800, 654}},
      {"RST16", "train", Task::kAe, {"ABSA16_Restaurants_Train_SB1_v2.xml", "ABSA16_Restaurants_Train_SB1.xml"}, {2000, 1743}},
      {"RST16", "test", Task::kAe, {"EN_REST_SB1_TEST.xml.gold", "EN_REST_SB1_TEST_gold.xml", "EN_REST_SB1_TEST.gold.xml"}, {676, 622}},
      {"LPT14", "train", Task::kAsc, {"Laptop_Train_v2.xml", "Laptops_Train_v2.xml", "Laptops_Train.xml"}, {987, 866, 460}},
      {"LPT14", "test", Task::kAsc, {"Laptops_Test_Gold.xml", "Laptop_Test_Gold.xml"}, {341, 128, 169}},
      {"RST14", "train", Task::kAsc, {"Restaurants_Train_v2.xml", "Restaurants_Train.xml"}, {2164, 805, 633}},
      {"RST14", "test", Task::kAsc, {"Restaurants_Test_Gold.xml"}, {728, 196, 196}},
  };
  return table;
}

std::vector<std::size_t> count_ae(const std::filesystem::path& path) {
  const auto examples = parse_semeval_ae(path);
  std::size_t aspects = 0;
  for (const auto& ex : examples) aspects += ex.aspects.size();
  return {examples.size(), aspects};
}

std::vector<std::size_t> count_asc(const std::filesystem::path& path) {
  std::vector<std::size_t> counts(3, 0);
  for (const auto& ex : parse_semeval_asc(path)) ++counts.at(static_cast<std::size_t>(ex.polarity));
  return counts;
}

std::vector<IngestCheck> verify_semeval(const std::filesystem::path& dir) {
  std::map<std::string, std::filesystem::path> found;
  if (std::filesystem::is_directory(dir)) {
    for (const auto& entry : std::filesystem::recursive_directory_iterator(dir)) {
      if (entry.is_regular_file()) found.emplace(entry.path().filename().string(), entry.path());
    }
  }
  std::vector<IngestCheck> checks;
  for (const auto& ref : reference_counts()) {
    IngestCheck check;
    check.reference = ref;
    for (const auto& name : ref.file_names) {
      if (auto it = found.find(name); it != found.end()) {
        check.file = it->second;
        break;
      }
    }
    if (!check.file.empty()) {
      check.actual = ref.task == Task::kAe ? count_ae(check.file) : count_asc(check.file);
      check.status = check.actual == ref.expected ? IngestCheck::Status::kMatch : IngestCheck::Status::kMismatch;
    }
    checks.push_back(std::move(check));
  }
  return checks;
}

}  // namespace absa
