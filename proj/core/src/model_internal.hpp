#pragma once

#include "leakage/cbm.hpp"

namespace leakage::detail {

// CBM: head input built from encoder logits, with masked entries replaced.
nn::Matrix cbm_head_input(const TrainedModel& model, const nn::Matrix& logits,
                          const ConceptMatrix* concepts, const ConceptMatrix* mask);

// Per-row activation for an intervened concept under the model's encoding.
double intervened_value(const TrainedModel& model, int concept_value);

struct CemForward {
  nn::ForwardCache trunk;
  std::vector<nn::ForwardCache> scores;  // per concept, output N x 1 (pre-sigmoid)
  nn::Matrix prob;                       // N x k, sigmoid(score)
  nn::Matrix used;                       // N x k, activation used for mixing
  nn::Matrix mixed;                      // N x k*d
  nn::ForwardCache head;
};

// `override_mask` (N x k, may be null) selects entries replaced by `concepts`.
CemForward cem_forward(const TrainedModel& model, const nn::Matrix& inputs,
                       const ConceptMatrix* concepts, const ConceptMatrix* override_mask);

nn::Matrix to_matrix(const ConceptMatrix& c);
nn::Matrix labels_column(const std::vector<int>& labels);
std::vector<int> argmax_rows(const nn::Matrix& m);

}  // namespace leakage::detail
