#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "advlab/attacks/attacks.hpp"
#include "advlab/datasets/image_set.hpp"
#include "advlab/error.hpp"
#include "advlab/zoo/classifier.hpp"

namespace advlab {

struct RobustnessRow {
  std::string model_id;
  std::string family;
  std::string tag;
  double clean_accuracy = 0;
  std::vector<double> pgd_accuracy;
  std::vector<double> mig_accuracy;
};

struct RobustnessReport {
  std::vector<double> epsilons;
  nlohmann::json pgd_spec;
  nlohmann::json mig_spec;
  std::size_t n = 0;
  std::vector<RobustnessRow> rows;
};

/// Clean accuracy, PGD accuracy per budget (independent runs) and MIG accuracy
/// per budget from one multi-budget run up to the largest budget. A budget of 0
/// reports clean accuracy.
template <std::floating_point T>
RobustnessRow eval_robustness_row(const Classifier<T>& model, const LabeledImageSet& data, const AttackSpec& pgd_spec,
                                  const AttackSpec& mig_spec, const std::vector<double>& epsilons,
                                  const ExecOptions& exec = {}) {
  data.validate();
  for (std::size_t i = 1; i < epsilons.size(); ++i) {
    if (!(epsilons[i] > epsilons[i - 1])) throw ConfigError("robustness sweep: epsilons must be ascending");
  }
  if (!epsilons.empty() && epsilons.front() < 0) throw ConfigError("robustness sweep: negative epsilon");
  const Tensor<T> x = data.images.template cast<T>();
  RobustnessRow row{model.id(), to_string(model.config().family), to_string(model.tag()), 0, {}, {}};
  row.clean_accuracy = success_rate(model, x, data.labels).accuracy;
  std::vector<double> positive;
  for (const double e : epsilons) {
    if (e > 0) positive.push_back(e);
  }
  std::vector<double> pgd_pos, mig_pos;
  for (const double e : positive) {
    const auto out = pgd(model, x, data.labels, pgd_spec.with_epsilons({e}), exec);
    pgd_pos.push_back(success_rate(model, out.adversarial[0], data.labels).accuracy);
  }
  if (!positive.empty()) {
    const auto out = mig_multi_epsilon(model, x, data.labels, mig_spec.with_epsilons(positive), exec);
    for (const auto& adv : out.adversarial) mig_pos.push_back(success_rate(model, adv, data.labels).accuracy);
  }
  std::size_t k = 0;
  for (const double e : epsilons) {
    row.pgd_accuracy.push_back(e > 0 ? pgd_pos[k] : row.clean_accuracy);
    row.mig_accuracy.push_back(e > 0 ? mig_pos[k] : row.clean_accuracy);
    if (e > 0) ++k;
  }
  return row;
}

template <std::floating_point T>
RobustnessReport eval_robustness_sweep(const std::vector<const Classifier<T>*>& models, const LabeledImageSet& data,
                                       const AttackSpec& pgd_spec, const AttackSpec& mig_spec,
                                       const std::vector<double>& epsilons, const ExecOptions& exec = {}) {
  RobustnessReport report{epsilons, to_json_value(pgd_spec), to_json_value(mig_spec), data.size(), {}};
  for (const auto* m : models) report.rows.push_back(eval_robustness_row(*m, data, pgd_spec, mig_spec, epsilons, exec));
  return report;
}

}  // namespace advlab
