#include "compose/eval.hpp"

#include "compose/error.hpp"
#include "compose/nn/optim.hpp"
#include "compose/parallel.hpp"

#include <Eigen/Eigenvalues>
#include <nlohmann/json.hpp>

#include <cmath>
#include <iostream>
#include <map>
#include <random>

namespace compose {

int handcrafted_dim(const BodyPartition& partition) {
    return 4 * 3 * kNumJoints + static_cast<int>(partition.size());
}

Eigen::VectorXd handcrafted_features(const MotionSequence& seq, const BodyPartition& partition) {
    const int T = seq.length();
    constexpr int D = 3 * kNumJoints;
    Eigen::MatrixXd pos(T, D);
    for (int t = 0; t < T; ++t) {
        for (int n = 0; n < kNumJoints; ++n) pos.block<1, 3>(t, 3 * n) = seq.frame(static_cast<std::size_t>(t))[n].transpose();
    }
    const Eigen::MatrixXd diff = pos.bottomRows(T - 1) - pos.topRows(T - 1);
    auto mean_std = [](const Eigen::MatrixXd& m, Eigen::Ref<Eigen::VectorXd> mean, Eigen::Ref<Eigen::VectorXd> sd) {
        mean = m.colwise().mean().transpose();
        sd = ((m.rowwise() - mean.transpose()).array().square().colwise().sum() / static_cast<double>(m.rows()))
                 .sqrt()
                 .transpose();
    };
    Eigen::VectorXd f(handcrafted_dim(partition));
    mean_std(pos, f.segment(0, D), f.segment(D, D));
    mean_std(diff, f.segment(2 * D, D), f.segment(3 * D, D));
    const PartEnergy e = compute_part_energy(seq, partition);
    for (std::size_t k = 0; k < e.per_part.size(); ++k) f(4 * D + static_cast<Eigen::Index>(k)) = e.per_part[k];
    return f;
}

ActionClassifier ActionClassifier::train(const std::vector<MotionSequence>& sequences, const std::vector<int>& labels,
                                         int num_classes, const ClassifierConfig& config, Rng& rng) {
    if (sequences.empty()) throw InvalidArgument("eval", "classifier needs training data");
    if (sequences.size() != labels.size()) throw InvalidArgument("eval", "classifier labels and sequences differ in count");
    if (num_classes < 2) throw InvalidArgument("eval", "classifier needs at least two classes");
    for (int y : labels) {
        if (y < 0 || y >= num_classes) throw InvalidArgument("eval", "classifier label out of range");
    }
    ActionClassifier c;
    c.num_classes_ = num_classes;
    c.config_ = config;
    const auto n = static_cast<Eigen::Index>(sequences.size());
    Eigen::MatrixXd x(n, handcrafted_dim());
    for (Eigen::Index i = 0; i < n; ++i) x.row(i) = handcrafted_features(sequences[static_cast<std::size_t>(i)]).transpose();
    c.mean_ = x.colwise().mean();
    const Eigen::RowVectorXd var = (x.rowwise() - c.mean_).array().square().colwise().sum() / static_cast<double>(n);
    c.scale_ = var.array().sqrt().max(config.std_floor).inverse().matrix();
    const Eigen::MatrixXd xs = ((x.rowwise() - c.mean_).array().rowwise() * c.scale_.array()).matrix();

    c.hidden_ = nn::Linear::create(c.params_, "hidden", static_cast<int>(x.cols()), config.hidden, rng);
    c.out_ = nn::Linear::create(c.params_, "out", config.hidden, num_classes, rng);
    nn::AdamW opt(c.params_, {config.lr, 0.9, 0.999, 1e-8, config.weight_decay});
    const nn::Var input = nn::constant(xs);
    for (int e = 0; e < config.epochs; ++e) {
        c.params_.zero_grad();
        nn::Binder b(c.params_, true);
        const nn::Var loss = nn::cross_entropy(c.out_(b, nn::gelu(c.hidden_(b, input))), labels);
        if (!std::isfinite(nn::scalar(loss))) throw NumericalError("eval", "classifier loss became non-finite");
        nn::backward(loss);
        opt.step(c.params_);
    }
    c.trained_ = true;
    return c;
}

Eigen::RowVectorXd ActionClassifier::standardize(const MotionSequence& seq) const {
    if (!trained_) throw InvalidState("eval", "classifier is not trained");
    return ((handcrafted_features(seq).transpose() - mean_).array() * scale_.array()).matrix();
}

Eigen::VectorXd ActionClassifier::penultimate(const MotionSequence& seq) const {
    nn::Binder b(const_cast<nn::ParameterSet&>(params_), false);
    return nn::gelu(hidden_(b, nn::constant(standardize(seq))))->value.transpose();
}

int ActionClassifier::predict(const MotionSequence& seq) const {
    nn::Binder b(const_cast<nn::ParameterSet&>(params_), false);
    const nn::Var logits = out_(b, nn::gelu(hidden_(b, nn::constant(standardize(seq)))));
    Eigen::Index arg = 0;
    logits->value.row(0).maxCoeff(&arg);
    return static_cast<int>(arg);
}

FeatureExtractor FeatureExtractor::handcrafted(const BodyPartition& partition) {
    FeatureExtractor fx;
    fx.partition_ = partition;
    return fx;
}

FeatureExtractor FeatureExtractor::classifier(std::shared_ptr<const ActionClassifier> model) {
    if (!model || !model->trained()) throw InvalidState("eval", "classifier extractor needs a trained classifier");
    FeatureExtractor fx;
    fx.classifier_ = std::move(model);
    return fx;
}

std::string FeatureExtractor::name() const { return classifier_ ? "classifier" : "handcrafted"; }

int FeatureExtractor::dim() const { return classifier_ ? classifier_->hidden_dim() : handcrafted_dim(partition_); }

Eigen::VectorXd FeatureExtractor::extract(const MotionSequence& seq) const {
    return classifier_ ? classifier_->penultimate(seq) : handcrafted_features(seq, partition_);
}

Eigen::MatrixXd extract_all(const std::vector<MotionSequence>& seqs, const FeatureExtractor& fx) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(seqs.size()), fx.dim());
    parallel_for(seqs.size(), [&](std::size_t i) { out.row(static_cast<Eigen::Index>(i)) = fx.extract(seqs[i]).transpose(); });
    return out;
}

GaussianStats gaussian_stats(const Eigen::MatrixXd& features) {
    if (features.rows() < 2) throw InvalidArgument("eval", "gaussian_stats needs at least two samples");
    GaussianStats s;
    s.mean = features.colwise().mean().transpose();
    const Eigen::MatrixXd centered = features.rowwise() - s.mean.transpose();
    const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(features.rows() - 1);
    s.cov = 0.5 * (cov + cov.transpose());
    return s;
}

Eigen::MatrixXd matrix_sqrt_psd(const Eigen::MatrixXd& m, double* clamped) {
    if (m.rows() != m.cols()) throw InvalidArgument("eval", "matrix_sqrt_psd needs a square matrix");
    const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-8 * std::max(1.0, m.cwiseAbs().maxCoeff())) {
        throw InvalidArgument("eval", "matrix_sqrt_psd: matrix is not symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
    if (es.info() != Eigen::Success) throw NumericalError("eval", "eigendecomposition failed");
    Eigen::VectorXd ev = es.eigenvalues();
    const double most_negative = std::max(0.0, -ev.minCoeff());
    if (clamped) *clamped = most_negative;
    const Eigen::VectorXd root = ev.cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

namespace {

double cross_trace(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    const Eigen::MatrixXd sa = matrix_sqrt_psd(a);
    const Eigen::MatrixXd inner = sa * b * sa;
    double clamped = 0.0;
    const double tr = matrix_sqrt_psd(0.5 * (inner + inner.transpose()), &clamped).trace();
    if (clamped > 1e-6 * std::max(1.0, inner.norm())) {
        std::cerr << "[eval] warning: clamped a negative eigenvalue of magnitude " << clamped << '\n';
    }
    return tr;
}

}  // namespace

double fid(const GaussianStats& t, const GaussianStats& g) {
    if (t.mean.size() != g.mean.size() || t.cov.rows() != g.cov.rows() || t.cov.rows() != t.mean.size() ||
        t.cov.cols() != t.cov.rows() || g.cov.cols() != g.cov.rows()) {
        throw InvalidArgument("eval", "fid: dimension mismatch");
    }
    const double mean_term = (t.mean - g.mean).squaredNorm();
    const double cross = 0.5 * (cross_trace(t.cov, g.cov) + cross_trace(g.cov, t.cov));
    const double value = mean_term + t.cov.trace() + g.cov.trace() - 2.0 * cross;
    return std::max(0.0, value);
}

double accuracy(const ActionClassifier& model, const std::vector<std::pair<MotionSequence, int>>& labeled) {
    if (!model.trained()) throw InvalidState("eval", "accuracy needs a trained classifier");
    if (labeled.empty()) throw InvalidArgument("eval", "accuracy of an empty set is undefined");
    std::vector<int> hit(labeled.size(), 0);
    parallel_for(labeled.size(), [&](std::size_t i) { hit[i] = model.predict(labeled[i].first) == labeled[i].second; });
    double n = 0.0;
    for (int h : hit) n += h;
    return n / static_cast<double>(labeled.size());
}

double diversity(const Eigen::MatrixXd& features, int n_pairs, Rng& rng) {
    if (features.rows() < 2) throw InvalidArgument("eval", "diversity needs at least two samples");
    if (n_pairs <= 0) throw InvalidArgument("eval", "diversity needs a positive pair count");
    std::uniform_int_distribution<Eigen::Index> pick(0, features.rows() - 1);
    double total = 0.0;
    for (int k = 0; k < n_pairs; ++k) {
        const Eigen::Index a = pick(rng);
        Eigen::Index b = pick(rng);
        while (b == a) b = pick(rng);
        total += (features.row(a) - features.row(b)).norm();
    }
    return total / n_pairs;
}

double multimodality(const std::vector<Eigen::MatrixXd>& groups, int n_pairs, Rng& rng) {
    if (groups.empty()) throw InvalidArgument("eval", "multimodality needs at least one group");
    double total = 0.0;
    for (const auto& g : groups) total += diversity(g, n_pairs, rng);
    return total / static_cast<double>(groups.size());
}

double mean_pairwise_distance(const Eigen::MatrixXd& features) {
    if (features.rows() < 2) throw InvalidArgument("eval", "mean_pairwise_distance needs at least two samples");
    double total = 0.0;
    long count = 0;
    for (Eigen::Index a = 0; a < features.rows(); ++a) {
        for (Eigen::Index b = a + 1; b < features.rows(); ++b) {
            total += (features.row(a) - features.row(b)).norm();
            ++count;
        }
    }
    return total / static_cast<double>(count);
}

void MetricsReport::validate() const {
    for (double v : {fid, accuracy, diversity, multimodality, fid_pm, accuracy_pm, diversity_pm, multimodality_pm}) {
        if (!std::isfinite(v)) throw ValidationError("eval", "metrics report has a non-finite value");
    }
    for (double v : {fid_pm, accuracy_pm, diversity_pm, multimodality_pm}) {
        if (v < 0.0) throw ValidationError("eval", "metrics report has a negative half-width");
    }
}

void to_json(nlohmann::json& j, const MetricsReport& r) {
    j = nlohmann::json{{"fid", r.fid},
                       {"fid_pm", r.fid_pm},
                       {"accuracy", r.accuracy},
                       {"accuracy_pm", r.accuracy_pm},
                       {"diversity", r.diversity},
                       {"diversity_pm", r.diversity_pm},
                       {"multimodality", r.multimodality},
                       {"multimodality_pm", r.multimodality_pm},
                       {"config_fingerprint", r.fingerprint},
                       {"seeds", r.seeds}};
}

namespace {

struct PointMetrics {
    double fid, accuracy, diversity, multimodality;
};

PointMetrics compute_point(const Eigen::MatrixXd& real_f, const Eigen::MatrixXd& gen_f, const std::vector<int>& gen_cls,
                           const std::vector<int>& gen_hits, const std::vector<std::size_t>& real_idx,
                           const std::vector<std::size_t>& gen_idx, int n_pairs, Rng& rng) {
    Eigen::MatrixXd r(static_cast<Eigen::Index>(real_idx.size()), real_f.cols());
    for (std::size_t k = 0; k < real_idx.size(); ++k) r.row(static_cast<Eigen::Index>(k)) = real_f.row(static_cast<Eigen::Index>(real_idx[k]));
    Eigen::MatrixXd g(static_cast<Eigen::Index>(gen_idx.size()), gen_f.cols());
    double hits = 0.0;
    std::map<int, std::vector<Eigen::Index>> by_class;
    for (std::size_t k = 0; k < gen_idx.size(); ++k) {
        g.row(static_cast<Eigen::Index>(k)) = gen_f.row(static_cast<Eigen::Index>(gen_idx[k]));
        hits += gen_hits[gen_idx[k]];
        by_class[gen_cls[gen_idx[k]]].push_back(static_cast<Eigen::Index>(k));
    }
    std::vector<Eigen::MatrixXd> groups;
    for (const auto& [cls, rows] : by_class) {
        if (rows.size() < 2) continue;
        Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), g.cols());
        for (std::size_t k = 0; k < rows.size(); ++k) m.row(static_cast<Eigen::Index>(k)) = g.row(rows[k]);
        groups.push_back(std::move(m));
    }
    PointMetrics p;
    p.fid = fid(gaussian_stats(r), gaussian_stats(g));
    p.accuracy = hits / static_cast<double>(gen_idx.size());
    p.diversity = diversity(g, n_pairs, rng);
    p.multimodality = groups.empty() ? 0.0 : multimodality(groups, n_pairs, rng);
    return p;
}

}  // namespace

MetricsReport evaluate_generations(const std::vector<std::pair<MotionSequence, int>>& real,
                                   const std::vector<std::pair<MotionSequence, int>>& generated,
                                   const ActionClassifier& classifier, const EvalSettings& settings, Rng& rng) {
    if (real.size() < 2 || generated.size() < 2) throw InvalidArgument("eval", "evaluation needs at least two real and two generated sequences");
    if (settings.bootstrap < 0) throw InvalidArgument("eval", "bootstrap count must be >= 0");
    FeatureExtractor fx = FeatureExtractor::handcrafted();
    if (settings.extractor == "classifier") {
        fx = FeatureExtractor::classifier(std::make_shared<const ActionClassifier>(classifier));
    } else if (settings.extractor != "handcrafted") {
        throw InvalidArgument("eval", "unknown feature extractor '" + settings.extractor + "'");
    }
    std::vector<MotionSequence> real_seqs, gen_seqs;
    std::vector<int> gen_cls;
    for (const auto& [s, c] : real) real_seqs.push_back(s);
    for (const auto& [s, c] : generated) {
        gen_seqs.push_back(s);
        gen_cls.push_back(c);
    }
    const Eigen::MatrixXd real_f = extract_all(real_seqs, fx);
    const Eigen::MatrixXd gen_f = extract_all(gen_seqs, fx);
    std::vector<int> hits(generated.size());
    parallel_for(generated.size(), [&](std::size_t i) { hits[i] = classifier.predict(gen_seqs[i]) == gen_cls[i]; });

    std::vector<std::size_t> all_real(real.size()), all_gen(generated.size());
    for (std::size_t k = 0; k < all_real.size(); ++k) all_real[k] = k;
    for (std::size_t k = 0; k < all_gen.size(); ++k) all_gen[k] = k;
    const PointMetrics point = compute_point(real_f, gen_f, gen_cls, hits, all_real, all_gen, settings.n_pairs, rng);

    MetricsReport report;
    report.fid = point.fid;
    report.accuracy = point.accuracy;
    report.diversity = point.diversity;
    report.multimodality = point.multimodality;
    if (settings.bootstrap > 1) {
        std::vector<PointMetrics> reps;
        std::uniform_int_distribution<std::size_t> pick_real(0, real.size() - 1), pick_gen(0, generated.size() - 1);
        for (int b = 0; b < settings.bootstrap; ++b) {
            std::vector<std::size_t> ri(real.size()), gi(generated.size());
            for (auto& v : ri) v = pick_real(rng);
            for (auto& v : gi) v = pick_gen(rng);
            reps.push_back(compute_point(real_f, gen_f, gen_cls, hits, ri, gi, settings.n_pairs, rng));
        }
        auto half_width = [&](double PointMetrics::*field) {
            double mean = 0.0;
            for (const auto& r : reps) mean += r.*field;
            mean /= static_cast<double>(reps.size());
            double var = 0.0;
            for (const auto& r : reps) var += (r.*field - mean) * (r.*field - mean);
            return 1.96 * std::sqrt(var / static_cast<double>(reps.size() - 1));
        };
        report.fid_pm = half_width(&PointMetrics::fid);
        report.accuracy_pm = half_width(&PointMetrics::accuracy);
        report.diversity_pm = half_width(&PointMetrics::diversity);
        report.multimodality_pm = half_width(&PointMetrics::multimodality);
    }
    report.validate();
    return report;
}

}  // namespace compose
