#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "featshield/encoder.hpp"
#include "featshield/manifest.hpp"
#include "featshield/synthetic.hpp"

namespace featshield {

/// Simulated attacker: rank-r additive update A*B on the frozen projector plus a
/// softmax identity head on pooled embeddings, fit by full-batch gradient descent.
struct ThreatSimConfig {
    std::size_t rank = 4;
    double learning_rate = 0.2;
    std::size_t epochs = 1000;
    std::uint64_t seed = 0;

    void validate(const EncoderConfig& enc) const;
};

struct AttackerModel {
    Tensor adapter_down;  // [encoder_width, rank]
    Tensor adapter_up;    // [rank, projector_width]
    Tensor head_weight;   // [projector_width, classes]
    Tensor head_bias;     // [classes]
    std::vector<std::string> classes;
    double final_loss = 0.0;
};

struct AttackReport {
    double ratio = 0.0;
    double train_accuracy = 0.0;  // percent
    double test_accuracy = 0.0;   // percent on clean test images: the identity attack success rate
    std::vector<std::string> classes;
    std::vector<std::vector<std::size_t>> confusion;  // [true][predicted], test split
};

/// Token-mean of the encoder's hidden features. The projector is affine, so
/// pooling before or after it gives the same pooled embedding.
Tensor pooled_hidden(const EncoderParams& params, const Image& image);

/// Writes images/<identity>_<k>.png and manifest.csv under out_dir.
DatasetManifest generate_synthetic_dataset(const SyntheticIdentityConfig& cfg, std::uint64_t seed,
                                           const std::filesystem::path& out_dir);

struct VerifiedDataset {
    DatasetManifest manifest;
    std::uint64_t seed = 0;   // generator seed that passed the probe
    double probe_accuracy = 0.0;
    std::size_t attempts = 0;
};

/// Regenerates with seed, seed+1, ... until an attacker trained on clean data
/// reaches `min_accuracy` percent on the test split.
VerifiedDataset generate_verified_dataset(const SyntheticIdentityConfig& cfg, std::uint64_t seed,
                                          const std::filesystem::path& out_dir, const EncoderParams& params,
                                          const ThreatSimConfig& attack, double min_accuracy = 90.0,
                                          std::size_t max_attempts = 20);

/// Trains on the train split only. Encoder parameters are never modified.
AttackerModel train_attacker(const DatasetManifest& manifest, const EncoderParams& params, const ThreatSimConfig& cfg);

/// Class index predicted for one image.
std::size_t predict_identity(const AttackerModel& model, const EncoderParams& params, const Image& image);

/// Accuracy on the train split and on the clean test split.
AttackReport evaluate_attack(const AttackerModel& model, const DatasetManifest& manifest, const EncoderParams& params,
                             double ratio = 0.0);

struct AttackSweepRow {
    double ratio = 0.0;
    AttackReport report;
};

/// One attacker per ratio on `clean` with the selected train entries swapped
/// for their versions in `protected_all` (selection shared with protect_dataset).
std::vector<AttackSweepRow> attack_sweep(const DatasetManifest& clean, const DatasetManifest& protected_all,
                                         const std::vector<double>& ratios, std::uint64_t selection_seed,
                                         const EncoderParams& params, const ThreatSimConfig& cfg,
                                         std::size_t workers = 1);

void write_attack_csv(const std::vector<AttackSweepRow>& rows, const std::filesystem::path& path);
void write_attack_json(const std::vector<AttackSweepRow>& rows, const std::filesystem::path& path);

}  // namespace featshield
