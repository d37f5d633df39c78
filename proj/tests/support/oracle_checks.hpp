#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dshift::testing {

struct OracleCheck {
  std::string name;
  int instances = 0;
  double max_error = 0.0;
};

/// Each runs `instances` randomized small cases and returns the largest absolute
/// deviation between the library and its brute-force oracle.
OracleCheck check_iou(int instances, std::uint64_t seed);
OracleCheck check_gram(int instances, std::uint64_t seed);
OracleCheck check_content_loss(int instances, std::uint64_t seed);
OracleCheck check_style_loss(int instances, std::uint64_t seed);
OracleCheck check_remd(int instances, std::uint64_t seed);
OracleCheck check_moment(int instances, std::uint64_t seed);
OracleCheck check_self_similarity(int instances, std::uint64_t seed);
OracleCheck check_cycle(int instances, std::uint64_t seed);
OracleCheck check_adversarial(int instances, std::uint64_t seed);
OracleCheck check_patch_nce(int instances, std::uint64_t seed);

/// All loss checks above except iou.
std::vector<OracleCheck> all_loss_checks(int instances, std::uint64_t seed);

}  // namespace dshift::testing
