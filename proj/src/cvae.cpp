#include "compose/cvae.hpp"

#include "compose/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_map>

namespace compose {

using nn::Var;

void DiagonalGaussian::validate() const {
    if (mean.size() != log_std.size()) throw InvalidArgument("cvae", "gaussian mean and log-std differ in size");
    if (!mean.allFinite() || !log_std.allFinite()) throw InvalidArgument("cvae", "gaussian has non-finite entries");
}

double kl_divergence(const DiagonalGaussian& q, const DiagonalGaussian& p) {
    q.validate();
    p.validate();
    if (q.dim() != p.dim()) throw InvalidArgument("cvae", "kl_divergence: dimension mismatch");
    double kl = 0.0;
    for (int k = 0; k < q.dim(); ++k) {
        const double var_q = std::exp(2.0 * q.log_std(k));
        const double var_p = std::exp(2.0 * p.log_std(k));
        const double d = q.mean(k) - p.mean(k);
        kl += p.log_std(k) - q.log_std(k) + (var_q + d * d) / (2.0 * var_p) - 0.5;
    }
    return kl;
}

Eigen::VectorXd reparameterize(const DiagonalGaussian& g, Rng& rng) {
    g.validate();
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd z(g.dim());
    for (int k = 0; k < g.dim(); ++k) z(k) = g.mean(k) + std::exp(g.log_std(k)) * normal(rng);
    return z;
}

double recon_loss(const Eigen::MatrixXd& y_hat, const Eigen::MatrixXd& y) {
    if (y_hat.rows() != y.rows() || y_hat.cols() != y.cols()) throw InvalidArgument("cvae", "recon_loss: shape mismatch");
    if (y.size() == 0) throw InvalidArgument("cvae", "recon_loss: empty input");
    return (y_hat - y).squaredNorm() / static_cast<double>(y.size());
}

Eigen::MatrixXd to_matrix(const std::vector<Pose>& frames) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(frames.size()), 3 * kNumJoints);
    for (std::size_t t = 0; t < frames.size(); ++t) {
        for (int n = 0; n < kNumJoints; ++n) m.block<1, 3>(static_cast<Eigen::Index>(t), 3 * n) = frames[t][n].transpose();
    }
    return m;
}

std::vector<Pose> from_matrix(const Eigen::MatrixXd& m) {
    if (m.cols() != 3 * kNumJoints) throw InvalidArgument("cvae", "pose matrix must have 72 columns");
    std::vector<Pose> frames(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index t = 0; t < m.rows(); ++t) {
        for (int n = 0; n < kNumJoints; ++n) frames[static_cast<std::size_t>(t)][n] = m.block<1, 3>(t, 3 * n).transpose();
    }
    return frames;
}

ModelConfig ModelConfig::full_scale() {
    ModelConfig c;
    c.width = 256;
    c.heads = 4;
    c.ffn_hidden = 1024;
    c.encoder_layers = 8;
    c.decoder_layers = 8;
    c.latent_dim = 256;
    c.embed_dim = 256;
    c.prior_hidden = 256;
    c.frames = 60;
    return c;
}

void ModelConfig::validate() const {
    auto positive = [](int v, const char* field) {
        if (v <= 0) throw InvalidArgument("cvae", std::string("model.") + field + " must be positive");
    };
    positive(num_classes, "num_classes");
    positive(frames, "frames");
    positive(latent_dim, "latent_dim");
    positive(embed_dim, "embed_dim");
    positive(width, "width");
    positive(heads, "heads");
    positive(ffn_hidden, "ffn_hidden");
    positive(prior_hidden, "prior_hidden");
    positive(batch_size, "batch_size");
    positive(dr_every, "dr_every");
    if (frames < 2) throw InvalidArgument("cvae", "model.frames must be at least 2");
    if (encoder_layers < 0 || decoder_layers < 0) throw InvalidArgument("cvae", "model layer counts must be >= 0");
    if (epochs < 0) throw InvalidArgument("cvae", "model.epochs must be >= 0");
    if (checkpoint_every < 0) throw InvalidArgument("cvae", "model.checkpoint_every must be >= 0");
    if (width % heads != 0) throw InvalidArgument("cvae", "model.width must be divisible by model.heads");
    if (!(weights.recon >= 0.0) || !(weights.kl >= 0.0) || !(weights.dr >= 0.0)) {
        throw InvalidArgument("cvae", "model.weights must be non-negative");
    }
    if (!(lr >= 0.0) || !(weight_decay >= 0.0)) throw InvalidArgument("cvae", "model.lr and weight_decay must be >= 0");
    if (!(std_floor > 0.0)) throw InvalidArgument("cvae", "model.std_floor must be positive");
}

Normalizer Normalizer::fit(const std::vector<Eigen::MatrixXd>& sequences, double floor) {
    Normalizer n;
    Eigen::Index rows = 0;
    Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(3 * kNumJoints);
    for (const auto& s : sequences) {
        sum += s.colwise().sum();
        rows += s.rows();
    }
    if (rows == 0) throw InvalidArgument("cvae", "normalizer needs at least one frame");
    n.mean = sum / static_cast<double>(rows);
    Eigen::RowVectorXd sq = Eigen::RowVectorXd::Zero(3 * kNumJoints);
    for (const auto& s : sequences) sq += (s.rowwise() - n.mean).array().square().matrix().colwise().sum();
    n.stddev = (sq / static_cast<double>(rows)).array().sqrt().max(floor).matrix();
    return n;
}

Eigen::MatrixXd Normalizer::normalize(const Eigen::MatrixXd& m) const {
    return ((m.rowwise() - mean).array().rowwise() / stddev.array()).matrix();
}

Eigen::MatrixXd Normalizer::denormalize(const Eigen::MatrixXd& m) const {
    return ((m.array().rowwise() * stddev.array()).matrix().rowwise() + mean);
}

CvaeModel CvaeModel::create(const ModelConfig& config, Rng& rng) {
    config.validate();
    CvaeModel m;
    m.config_ = config;
    auto& ps = m.params_;
    const int W = config.width, E = config.embed_dim, Z = config.latent_dim, D = 3 * kNumJoints;
    std::normal_distribution<double> normal(0.0, 1.0);
    auto gaussian = [&](int rows, int cols, double s) {
        nn::Matrix out(rows, cols);
        for (Eigen::Index c = 0; c < cols; ++c) {
            for (Eigen::Index r = 0; r < rows; ++r) out(r, c) = s * normal(rng);
        }
        return out;
    };

    m.embedding_ = ps.add("label_embedding", gaussian(config.num_classes, E, 1.0));

    m.enc_label = nn::Linear::create(ps, "encoder.label", E, W, rng);
    m.mu_token_ = ps.add("encoder.mu_token", gaussian(1, W, 0.02));
    m.sigma_token_ = ps.add("encoder.sigma_token", gaussian(1, W, 0.02));
    m.enc_frames = nn::Linear::create(ps, "encoder.frames", D, W, rng);
    for (int l = 0; l < config.encoder_layers; ++l) {
        const std::string p = "encoder.block" + std::to_string(l);
        m.encoder_.push_back({nn::LayerNorm::create(ps, p + ".ln1", W), nn::LayerNorm::create(ps, p + ".ln2", W),
                              nn::MultiHeadAttention::create(ps, p + ".attn", W, config.heads, rng),
                              nn::FeedForward::create(ps, p + ".ffn", W, config.ffn_hidden, rng)});
    }
    m.enc_final = nn::LayerNorm::create(ps, "encoder.final_ln", W);
    m.enc_mu_head = nn::Linear::create(ps, "encoder.mu_head", W, Z, rng);
    m.enc_sigma_head = nn::Linear::create(ps, "encoder.sigma_head", W, Z, rng);

    m.prior_hidden = nn::Linear::create(ps, "prior.hidden", E, config.prior_hidden, rng);
    m.prior_out = nn::Linear::create(ps, "prior.out", config.prior_hidden, 2 * Z, rng);

    m.dec_latent = nn::Linear::create(ps, "decoder.latent", Z, W, rng);
    m.dec_label = nn::Linear::create(ps, "decoder.label", E, W, rng);
    for (int l = 0; l < config.decoder_layers; ++l) {
        const std::string p = "decoder.block" + std::to_string(l);
        m.decoder_.push_back({nn::LayerNorm::create(ps, p + ".ln1", W), nn::LayerNorm::create(ps, p + ".ln2", W),
                              nn::LayerNorm::create(ps, p + ".ln3", W),
                              nn::MultiHeadAttention::create(ps, p + ".self_attn", W, config.heads, rng),
                              nn::MultiHeadAttention::create(ps, p + ".cross_attn", W, config.heads, rng),
                              nn::FeedForward::create(ps, p + ".ffn", W, config.ffn_hidden, rng)});
    }
    m.dec_final = nn::LayerNorm::create(ps, "decoder.final_ln", W);
    m.dec_out = nn::Linear::create(ps, "decoder.out", W, D, rng);

    // Start both Gaussians near unit scale so the initial KL stays small.
    ps[m.enc_sigma_head.weight].value *= 0.1;
    ps[m.prior_out.weight].value *= 0.1;
    return m;
}

void CvaeModel::check_label(const MixedLabel& label) const {
    if (label.num_classes() != config_.num_classes) {
        throw InvalidArgument("cvae", "label has " + std::to_string(label.num_classes()) + " classes, model expects " +
                                          std::to_string(config_.num_classes));
    }
}

Var CvaeModel::embed(nn::Binder& b, const MixedLabel& label) const {
    check_label(label);
    const auto& w = label.weights();
    nn::Matrix row(1, static_cast<Eigen::Index>(w.size()));
    for (std::size_t c = 0; c < w.size(); ++c) row(0, static_cast<Eigen::Index>(c)) = w[c];
    return nn::matmul(nn::constant(std::move(row)), b(embedding_));
}

CvaeModel::GaussianVars CvaeModel::encode(nn::Binder& b, const Var& embedding, const Var& frames) const {
    if (frames->value.cols() != 3 * kNumJoints) throw InvalidArgument("cvae", "encode: frames must have 72 columns");
    const int T = static_cast<int>(frames->value.rows());
    const Var label = enc_label(b, embedding);
    Var x = nn::concat_rows({nn::add(label, b(mu_token_)), nn::add(label, b(sigma_token_)), enc_frames(b, frames)});
    x = nn::add_const(x, nn::sinusoidal_positions(T + 2, config_.width));
    for (const auto& blk : encoder_) {
        const Var h = blk.ln1(b, x);
        x = nn::add(x, blk.attn(b, h, h));
        x = nn::add(x, blk.ffn(b, blk.ln2(b, x)));
    }
    x = enc_final(b, x);
    return {enc_mu_head(b, nn::slice_rows(x, 0, 1)), enc_sigma_head(b, nn::slice_rows(x, 1, 1))};
}

CvaeModel::GaussianVars CvaeModel::prior(nn::Binder& b, const Var& embedding) const {
    const Var out = prior_out(b, nn::gelu(prior_hidden(b, embedding)));
    const int Z = config_.latent_dim;
    return {nn::slice_cols(out, 0, Z), nn::slice_cols(out, Z, Z)};
}

Var CvaeModel::decode(nn::Binder& b, const Var& embedding, const Var& z, int frames) const {
    if (z->value.rows() != 1 || z->value.cols() != config_.latent_dim) {
        throw InvalidArgument("cvae", "decode: latent must be 1 x " + std::to_string(config_.latent_dim));
    }
    if (frames < 1) throw InvalidArgument("cvae", "decode: frame count must be positive");
    const Var memory = nn::concat_rows({dec_latent(b, z), dec_label(b, embedding)});
    Var x = nn::constant(nn::sinusoidal_positions(frames, config_.width));
    for (const auto& blk : decoder_) {
        const Var h = blk.ln1(b, x);
        x = nn::add(x, blk.self_attn(b, h, h));
        x = nn::add(x, blk.cross_attn(b, blk.ln2(b, x), memory));
        x = nn::add(x, blk.ffn(b, blk.ln3(b, x)));
    }
    return dec_out(b, dec_final(b, x));
}

Eigen::RowVectorXd CvaeModel::embed_mixed_label(const MixedLabel& label) const {
    nn::Binder b(const_cast<nn::ParameterSet&>(params_), false);
    return embed(b, label)->value;
}

DiagonalGaussian CvaeModel::encode(const MixedLabel& label, const Eigen::MatrixXd& frames) const {
    if (frames.cols() != 3 * kNumJoints || frames.rows() < 1) throw InvalidArgument("cvae", "encode: frames must be T x 72");
    nn::Binder b(const_cast<nn::ParameterSet&>(params_), false);
    const auto g = encode(b, embed(b, label), nn::constant(normalizer_.normalize(frames)));
    return {g.mean->value.transpose(), g.log_std->value.transpose()};
}

DiagonalGaussian CvaeModel::prior(const MixedLabel& label) const {
    nn::Binder b(const_cast<nn::ParameterSet&>(params_), false);
    const auto g = prior(b, embed(b, label));
    return {g.mean->value.transpose(), g.log_std->value.transpose()};
}

Eigen::MatrixXd CvaeModel::decode(const MixedLabel& label, const Eigen::VectorXd& z, int frames) const {
    nn::Binder b(const_cast<nn::ParameterSet&>(params_), false);
    const Var out = decode(b, embed(b, label), nn::constant(z.transpose()), frames);
    return normalizer_.denormalize(out->value);
}

std::vector<TrainingItem> make_training_set(const std::vector<PseudoComposite>& composites,
                                            const std::vector<MotionSequence>& sources, int frames,
                                            const BodyPartition& partition, bool energy_mask) {
    std::unordered_map<std::string, const MotionSequence*> by_id;
    for (const auto& s : sources) by_id.emplace(s.id(), &s);
    auto lookup = [&](const std::string& id) -> const MotionSequence& {
        auto it = by_id.find(id);
        if (it == by_id.end()) throw InvalidArgument("cvae", "composite source '" + id + "' not found");
        return *it->second;
    };
    const PartEnergy flat = uniform_energy(1.0, partition);
    std::vector<TrainingItem> items;
    items.reserve(composites.size());
    for (const auto& c : composites) {
        TrainingItem item{c.sequence.id(), to_matrix(resample(c.sequence, frames).frames()), c.mixed_label, {}, {}, {}};
        const MotionSequence si = resample(lookup(c.source_ids.first), frames);
        const MotionSequence sj = resample(lookup(c.source_ids.second), frames);
        item.sources = std::make_pair(to_matrix(si.frames()), to_matrix(sj.frames()));
        item.energy_i = (energy_mask ? compute_part_energy(si, partition) : flat).per_joint;
        item.energy_j = (energy_mask ? compute_part_energy(sj, partition) : flat).per_joint;
        items.push_back(std::move(item));
    }
    return items;
}

namespace {

Pose pose_from_row(const Eigen::MatrixXd& row) { return from_matrix(row).front(); }

Var kl_graph(const CvaeModel::GaussianVars& q, const CvaeModel::GaussianVars& p) {
    const Var var_q = nn::exp(nn::scale(q.log_std, 2.0));
    const Var inv_var_p = nn::exp(nn::scale(p.log_std, -2.0));
    const Var diff2 = nn::square(nn::sub(q.mean, p.mean));
    const Var ratio = nn::scale(nn::mul(nn::add(var_q, diff2), inv_var_p), 0.5);
    const double d = static_cast<double>(q.mean->value.cols());
    return nn::add_scalar(nn::sum(nn::add(nn::sub(p.log_std, q.log_std), ratio)), -0.5 * d);
}

}  // namespace

Var render_smooth_op(const Var& pose_row, const CameraConfig& cam, const SplatConfig& splat) {
    if (pose_row->value.rows() != 1 || pose_row->value.cols() != 3 * kNumJoints) {
        throw InvalidArgument("cvae", "render_smooth_op expects a 1 x 72 pose row");
    }
    const Pose pose = pose_from_row(pose_row->value);
    Image img = render_smooth(pose, cam, splat);
    return nn::custom({pose_row}, std::move(img), [pose, cam, splat](nn::Node& n) {
        const auto g = render_smooth_vjp(pose, cam, n.grad, splat);
        nn::Matrix row(1, 3 * kNumJoints);
        for (int j = 0; j < kNumJoints; ++j) row.block<1, 3>(0, 3 * j) = g[static_cast<std::size_t>(j)].transpose();
        nn::accumulate(*n.inputs[0], row);
    });
}

BatchLoss total_loss(const CvaeModel& model, nn::Binder& binder, const std::vector<const TrainingItem*>& batch,
                     const LossContext& ctx, bool with_dr, Rng& rng) {
    if (batch.empty()) throw InvalidArgument("cvae", "total_loss: empty batch");
    if (with_dr && ctx.inpainter == nullptr) throw InvalidArgument("cvae", "total_loss: DR term needs an inpainter");
    const auto& cfg = model.config();
    const auto& norm = model.normalizer();
    std::normal_distribution<double> normal(0.0, 1.0);
    const auto& cam = ctx.dr.camera;

    std::vector<Var> recon_terms, kl_terms, dr_terms;
    for (const TrainingItem* item : batch) {
        const int T = static_cast<int>(item->frames.rows());
        if (item->frames.cols() != 3 * kNumJoints) throw InvalidArgument("cvae", "training item must be T x 72");
        const Eigen::MatrixXd target = norm.normalize(item->frames);
        const Var emb = model.embed(binder, item->label);
        const auto q = model.encode(binder, emb, nn::constant(target));
        const auto p = model.prior(binder, emb);
        nn::Matrix eps(1, cfg.latent_dim);
        for (int k = 0; k < cfg.latent_dim; ++k) eps(0, k) = normal(rng);
        const Var z = nn::add(q.mean, nn::mul_const(nn::exp(q.log_std), eps));
        const Var out = model.decode(binder, emb, z, T);
        recon_terms.push_back(nn::mean(nn::square(nn::add_const(out, -target))));
        kl_terms.push_back(kl_graph(q, p));

        if (!with_dr) continue;
        if (!item->sources) throw InvalidArgument("cvae", "item '" + item->id + "' has no sources for the DR term");
        const int t = std::uniform_int_distribution<int>(0, T - 1)(rng);
        const Var pose = nn::add_const(nn::mul_const(nn::slice_rows(out, t, 1), norm.stddev), norm.mean);
        const Var image = render_smooth_op(pose, cam, ctx.dr.splat);

        std::pair<RegionMask, RegionMask> masks;
        const std::string key = item->id + "#" + std::to_string(t);
        if (ctx.mask_cache && ctx.mask_cache->count(key)) {
            masks = ctx.mask_cache->at(key);
        } else {
            const auto jp = project_pose(pose_from_row(pose->value), cam);
            masks = {decoupling_mask(jp, item->energy_i, cam.height, cam.width, ctx.dr.decouple),
                     decoupling_mask(jp, item->energy_j, cam.height, cam.width, ctx.dr.decouple)};
            if (ctx.mask_cache) ctx.mask_cache->emplace(key, masks);
        }
        const Image v_i = render_smooth(pose_from_row(item->sources->first.row(t)), cam, ctx.dr.splat);
        const Image v_j = render_smooth(pose_from_row(item->sources->second.row(t)), cam, ctx.dr.splat);
        const Var inp_i = ctx.inpainter->inpaint_graph(image, masks.first, ctx.dr.decouple.fill);
        const Var inp_j = ctx.inpainter->inpaint_graph(image, masks.second, ctx.dr.decouple.fill);
        dr_terms.push_back(nn::add(nn::sum(nn::square(nn::add_const(inp_i, -v_i))),
                                   nn::sum(nn::square(nn::add_const(inp_j, -v_j)))));
    }

    const double inv = 1.0 / static_cast<double>(batch.size());
    auto batch_mean = [inv](const std::vector<Var>& terms) {
        Var acc = terms.front();
        for (std::size_t k = 1; k < terms.size(); ++k) acc = nn::add(acc, terms[k]);
        return nn::scale(acc, inv);
    };
    BatchLoss out;
    const Var recon = batch_mean(recon_terms);
    const Var kl = batch_mean(kl_terms);
    Var total = nn::add(nn::scale(recon, cfg.weights.recon), nn::scale(kl, cfg.weights.kl));
    out.terms.recon = nn::scalar(recon);
    out.terms.kl = nn::scalar(kl);
    if (with_dr) {
        const Var dr = batch_mean(dr_terms);
        total = nn::add(total, nn::scale(dr, cfg.weights.dr));
        out.terms.dr = nn::scalar(dr);
    }
    out.total = total;
    out.terms.total = nn::scalar(total);
    return out;
}

double smoothed_recon(const std::vector<EpochStats>& history, int window) {
    if (history.empty()) throw InvalidArgument("cvae", "smoothed_recon: empty history");
    const std::size_t n = std::min(history.size(), static_cast<std::size_t>(std::max(window, 1)));
    double s = 0.0;
    for (std::size_t k = history.size() - n; k < history.size(); ++k) s += history[k].loss.recon;
    return s / static_cast<double>(n);
}

namespace {

[[noreturn]] void nan_abort(const std::vector<const TrainingItem*>& batch, const LossBreakdown& terms, int epoch,
                            long step, const std::string& dump_path) {
    nlohmann::json dump;
    dump["epoch"] = epoch;
    dump["step"] = step;
    dump["recon"] = std::isfinite(terms.recon) ? nlohmann::json(terms.recon) : nlohmann::json(std::to_string(terms.recon));
    dump["kl"] = std::isfinite(terms.kl) ? nlohmann::json(terms.kl) : nlohmann::json(std::to_string(terms.kl));
    dump["dr"] = std::isfinite(terms.dr) ? nlohmann::json(terms.dr) : nlohmann::json(std::to_string(terms.dr));
    nlohmann::json items = nlohmann::json::array();
    for (const auto* it : batch) {
        items.push_back({{"id", it->id}, {"finite_frames", it->frames.allFinite()}, {"label", it->label.weights()}});
    }
    dump["batch"] = items;
    if (!dump_path.empty()) {
        std::ofstream f(dump_path);
        f << dump.dump(2) << '\n';
    }
    throw NumericalError("cvae", "non-finite loss at epoch " + std::to_string(epoch) + ", step " + std::to_string(step) +
                                     ": " + dump.dump());
}

}  // namespace

void train_more(TrainState& state, const std::vector<TrainingItem>& items, const LossContext& ctx, int epochs,
                const TrainOptions& options) {
    if (items.empty()) throw InvalidArgument("cvae", "training set is empty");
    auto& model = state.model;
    const auto& cfg = model.config();
    for (const auto& it : items) {
        if (it.frames.rows() != cfg.frames) {
            throw InvalidArgument("cvae", "item '" + it.id + "' has " + std::to_string(it.frames.rows()) +
                                              " frames, model expects " + std::to_string(cfg.frames));
        }
    }
    const bool dr_enabled = cfg.weights.dr > 0.0 && ctx.inpainter != nullptr;
    std::vector<std::size_t> order(items.size());

    for (int e = 0; e < epochs; ++e) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), state.rng);
        LossBreakdown sums;
        int batches = 0, dr_batches = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            std::vector<const TrainingItem*> batch;
            for (std::size_t k = start; k < end; ++k) batch.push_back(&items[order[k]]);
            const long step = state.optimizer.steps();
            const bool with_dr = dr_enabled && step % cfg.dr_every == 0;

            model.params().zero_grad();
            nn::Binder binder(model.params(), true);
            const BatchLoss loss = total_loss(model, binder, batch, ctx, with_dr, state.rng);
            if (!std::isfinite(loss.terms.total)) nan_abort(batch, loss.terms, state.epoch, step, options.dump_path);
            nn::backward(loss.total);
            state.optimizer.step(model.params());

            sums.recon += loss.terms.recon;
            sums.kl += loss.terms.kl;
            sums.total += loss.terms.total;
            if (with_dr) {
                sums.dr += loss.terms.dr;
                ++dr_batches;
            }
            ++batches;
        }
        EpochStats stats;
        stats.epoch = state.epoch;
        stats.loss.recon = sums.recon / batches;
        stats.loss.kl = sums.kl / batches;
        stats.loss.dr = dr_batches > 0 ? sums.dr / dr_batches : 0.0;
        stats.loss.total = sums.total / batches;
        state.history.push_back(stats);
        ++state.epoch;
        if (options.on_epoch) options.on_epoch(stats);
        if (options.on_checkpoint && cfg.checkpoint_every > 0 && state.epoch % cfg.checkpoint_every == 0) {
            options.on_checkpoint(state);
        }
    }
}

TrainState train(const std::vector<TrainingItem>& items, const ModelConfig& config, const LossContext& ctx, Rng rng,
                 const TrainOptions& options) {
    config.validate();
    if (items.empty()) throw InvalidArgument("cvae", "training set is empty");
    for (const auto& it : items) {
        if (it.label.num_classes() != config.num_classes) {
            throw InvalidArgument("cvae", "item '" + it.id + "' label has the wrong class count");
        }
    }
    CvaeModel model = CvaeModel::create(config, rng);
    std::vector<Eigen::MatrixXd> seqs;
    seqs.reserve(items.size());
    for (const auto& it : items) seqs.push_back(it.frames);
    model.set_normalizer(Normalizer::fit(seqs, config.std_floor));
    nn::AdamW optimizer(model.params(), {config.lr, 0.9, 0.999, 1e-8, config.weight_decay});
    TrainState state{std::move(model), std::move(optimizer), 0, rng, {}};
    train_more(state, items, ctx, config.epochs, options);
    return state;
}

MotionSequence generate(const ActionLabel& x_i, const ActionLabel& x_j, double lambda, const TrainState& state,
                        Rng& rng, const std::string& id, double fps) {
    if (!state.trained()) throw InvalidState("cvae", "generate called on an untrained model");
    const MixedLabel label = couple_labels(x_i, x_j, lambda);
    const DiagonalGaussian p = state.model.prior(label);
    const Eigen::VectorXd z = reparameterize(p, rng);
    const Eigen::MatrixXd frames = state.model.decode(label, z, state.model.config().frames);
    return MotionSequence(id, from_matrix(frames), label, fps);
}

GradCheckResult grad_check(nn::ParameterSet& params, const std::function<Var(nn::Binder&)>& loss, double eps) {
    params.zero_grad();
    {
        nn::Binder b(params, true);
        nn::backward(loss(b));
    }
    const Eigen::VectorXd analytic = params.flat_grad();
    const Eigen::VectorXd base = params.flatten();
    auto eval = [&](const Eigen::VectorXd& at) {
        params.assign(at);
        nn::Binder b(params, false);
        return nn::scalar(loss(b));
    };
    GradCheckResult r;
    Eigen::VectorXd probe = base;
    for (Eigen::Index k = 0; k < base.size(); ++k) {
        probe(k) = base(k) + eps;
        const double up = eval(probe);
        probe(k) = base(k) - eps;
        const double down = eval(probe);
        probe(k) = base(k);
        const double fd = (up - down) / (2.0 * eps);
        const double ga = analytic(k);
        const double rel = std::abs(ga - fd) / std::max({std::abs(ga), std::abs(fd), 1e-8});
        if (rel > r.max_rel_error) {
            r.max_rel_error = rel;
            r.worst_index = static_cast<std::size_t>(k);
            r.worst_analytic = ga;
            r.worst_numeric = fd;
        }
        ++r.checked;
    }
    params.assign(base);
    params.zero_grad();
    r.worst_tensor = base.size() > 0 ? params.name_at(r.worst_index) : std::string{};
    return r;
}

}  // namespace compose
