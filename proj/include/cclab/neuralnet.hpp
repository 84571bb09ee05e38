#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace cclab::nn {

struct Shape {
    int c = 1, h = 1, w = 1;
    int size() const { return c * h * w; }
    bool operator==(const Shape&) const = default;
};

/// High-level layer descriptors; residual blocks are lowered to primitive
/// ops when a Network is built.
struct LayerDesc {
    enum class Kind { conv, relu, maxpool2, dense, dropout, bottleneck, global_avg_pool };
    Kind kind = Kind::conv;
    int out_channels = 0;   // conv/dense
    int kernel = 0;         // conv
    int stride = 1;         // conv/bottleneck
    int pad = 0;            // conv
    double p = 0.0;         // dropout
    int mid_channels = 0;   // bottleneck
    std::string tap;        // non-empty: record activations after this layer
};

struct ArchitectureSpec {
    std::string name;
    int num_classes = 0;
    std::vector<LayerDesc> layers;

    std::string to_json() const;
    static ArchitectureSpec from_json(const std::string& text);
};

/// conv16(5)/pool/conv32(3)/pool/conv64(3)/pool/dense250/dense250/
/// dropout 0.4/classifier, with taps C1,C2,C3,F1,F2.
ArchitectureSpec deepcc_arch(int num_classes);

/// Residual variant: stem conv + 3 stages of 3/1/2 bottleneck blocks starting
/// at 16/32/64 channels, global average pooling, classifier. Taps S1,S2,S3.
ArchitectureSpec rescc_arch(int num_classes);

/// A tap-sized linear classifier (probe) architecture.
ArchitectureSpec linear_probe_arch(int num_classes);

template <typename T>
struct ParamBlock {
    std::vector<T> w, b;
};

template <typename T>
class Network;

/// Per-thread buffers: activations, their gradients, pool indices, dropout
/// masks, skip-connection buffers.
template <typename T>
class Workspace {
public:
    Workspace() = default;
    explicit Workspace(const Network<T>& net);

    const std::vector<T>& activation(int op_index) const { return acts_[static_cast<size_t>(op_index)]; }
    const std::vector<T>& scores() const { return acts_.back(); }
    const std::vector<T>& input_gradient() const { return d_input_; }

private:
    friend class Network<T>;
    std::vector<T> input_, d_input_;
    std::vector<std::vector<T>> acts_, d_acts_;
    std::vector<std::vector<int>> pool_idx_;
    std::vector<std::vector<uint8_t>> drop_mask_;
    std::vector<std::vector<T>> skip_, d_skip_, scratch_, d_scratch_;
    bool dropout_active_ = false;
};

template <typename T>
struct GradBuffer {
    std::vector<ParamBlock<T>> blocks;

    void zero();
    void add(const GradBuffer& other);
    void scale(T s);
};

template <typename T>
struct AdamState {
    std::vector<ParamBlock<T>> m, v;
    int64_t t = 0;
};

struct AdamConfig {
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

template <typename T>
class Network {
public:
    Network() = default;

    /// Lower the architecture to primitive ops and He-uniform initialize.
    static Network build(const ArchitectureSpec& arch, Shape input, uint64_t init_seed);

    const ArchitectureSpec& arch() const { return arch_; }
    Shape input_shape() const { return input_shape_; }
    int num_classes() const { return arch_.num_classes; }
    int num_ops() const { return static_cast<int>(ops_.size()); }

    /// (tap name, op index) pairs in execution order.
    const std::vector<std::pair<std::string, int>>& taps() const { return taps_; }
    int tap_index(const std::string& name) const;
    int tap_dim(const std::string& name) const;

    std::vector<ParamBlock<T>>& params() { return params_; }
    const std::vector<ParamBlock<T>>& params() const { return params_; }
    GradBuffer<T> make_grad_buffer() const;
    AdamState<T> make_adam_state() const;
    size_t param_count() const;
    uint64_t param_checksum() const;

    /// Run the net. Dropout draws from (dropout_seed) in train mode only.
    void forward(const T* image, Workspace<T>& ws, bool train, uint64_t dropout_seed = 0) const;

    /// Cross-entropy loss of a single sample plus parameter gradients
    /// (accumulated into grads) and the input gradient (kept in ws).
    T loss_and_grad(const T* image, int label, Workspace<T>& ws, GradBuffer<T>& grads,
                    uint64_t dropout_seed = 0) const;

    /// Numerically stable -log softmax[label] of a score vector.
    static T cross_entropy(const std::vector<T>& scores, int label);

    /// Smallest distance to a ReLU kink or max-pool tie in the last forward
    /// pass stored in ws. Finite-difference gradient checks reject
    /// configurations where this margin is tiny.
    T fd_kink_margin(const Workspace<T>& ws) const;

    void adam_step(const GradBuffer<T>& grads, AdamState<T>& state, double lr,
                   const AdamConfig& cfg = {});

    /// Convert parameters from another precision (gradient checks build
    /// double copies of float nets).
    template <typename U>
    static Network from_other(const Network<U>& other);

private:
    friend class Workspace<T>;
    template <typename U> friend class Network;

    struct Op {
        LayerDesc::Kind kind;            // conv/relu/maxpool2/dense/dropout/global_avg_pool
        bool skip_save = false;          // this op saves the residual input
        bool skip_add = false;           // this op adds the saved residual
        int skip_slot = -1;
        bool skip_projection = false;    // skip_save applies a 1x1 conv
        int param = -1;                  // index into params_, -1 if none
        int proj_param = -1;             // projection conv parameters
        Shape in, out;
        int kernel = 0, stride = 1, pad = 0;
        double p = 0.0;
        int proj_stride = 1;
    };

    void append_conv(Shape& cur, int out_c, int k, int stride, int pad, const std::string& tap);
    void append_simple(LayerDesc::Kind kind, Shape& cur, double p, const std::string& tap);
    void append_dense(Shape& cur, int out, const std::string& tap);
    void append_bottleneck(Shape& cur, int mid, int out, int stride, const std::string& tap);
    int add_param(int w_size, int b_size, int fan_in);
    void run_op(const Op& op, const std::vector<T>& in, std::vector<T>& out, Workspace<T>& ws,
                int idx, bool train, uint64_t dropout_seed) const;
    void run_op_backward(const Op& op, const std::vector<T>& in, const std::vector<T>& out,
                         const std::vector<T>& d_out, std::vector<T>& d_in, Workspace<T>& ws,
                         int idx, GradBuffer<T>& grads) const;

    ArchitectureSpec arch_;
    Shape input_shape_;
    std::vector<Op> ops_;
    std::vector<ParamBlock<T>> params_;
    std::vector<int> param_fan_in_;
    std::vector<std::pair<std::string, int>> taps_;
    int skip_slots_ = 0;
    uint64_t init_seed_ = 0;
};

// ---- training --------------------------------------------------------------

struct Sample {
    std::vector<float> image;
    int label = 0;
};
using SampleSet = std::vector<Sample>;

struct TrainConfig {
    int epochs = 30;
    double base_lr = 1e-3;
    int decay_every_epochs = 10;  // lr multiplied by decay_factor^(epoch/decay_every)
    double decay_factor = 0.1;
    int batch_size = 32;
    AdamConfig adam;
    uint64_t seed = 1;
    int threads = 0;  // 0: one worker per core (capped); 1: bit-reproducible
    /// On divergence the current parameters are dumped here before throwing.
    std::optional<std::filesystem::path> divergence_dump;
    bool verbose = false;
};

struct EpochLog {
    int epoch = 0;
    double train_loss = 0.0;
    double val_top1 = 0.0;
    double lr = 0.0;
};

struct TrainResult {
    std::vector<EpochLog> log;
    int best_epoch = -1;
    double best_val_top1 = 0.0;
};

/// Adam + step-decay cross-entropy training; the network ends at the
/// best-validation parameters.
TrainResult train(Network<float>& net, const SampleSet& train_set, const SampleSet& val_set,
                  const TrainConfig& cfg);

/// Top-1 accuracy in eval mode (ties broken to the lowest class id).
double evaluate_top1(const Network<float>& net, const SampleSet& set, int threads = 0);

/// Eval-mode class scores for every sample, row-major n x classes.
std::vector<std::vector<float>> score_set(const Network<float>& net, const SampleSet& set,
                                          int threads = 0);

struct ActivationBatch {
    std::string tap;
    int dim = 0;
    std::vector<float> data;  // row-major n x dim

    const float* row(size_t i) const { return data.data() + i * static_cast<size_t>(dim); }
    size_t rows() const { return dim == 0 ? 0 : data.size() / static_cast<size_t>(dim); }
};

/// Eval-mode activations at the named taps, in sample order.
std::vector<ActivationBatch> extract_activations(const Network<float>& net, const SampleSet& set,
                                                 const std::vector<std::string>& taps,
                                                 int threads = 0);

/// Train a linear readout on frozen features from `tap`. The base network is
/// untouched (checked by checksum).
struct ProbeResult {
    Network<float> probe;
    TrainResult training;
    std::string tap;
};
ProbeResult train_probe(const Network<float>& base, const std::string& tap,
                        const SampleSet& train_set, const SampleSet& val_set,
                        const TrainConfig& cfg);

/// Scores of a probe over tap features extracted from `set`.
std::vector<std::vector<float>> probe_scores(const Network<float>& base,
                                             const ProbeResult& probe, const SampleSet& set,
                                             int threads = 0);

// ---- checkpoints -----------------------------------------------------------

void save_checkpoint(const Network<float>& net, const std::filesystem::path& path,
                     const AdamState<float>* state = nullptr);
Network<float> load_checkpoint(const std::filesystem::path& path,
                               AdamState<float>* state = nullptr);

int default_thread_count();

}  // namespace cclab::nn
