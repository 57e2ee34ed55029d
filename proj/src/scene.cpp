#include "vdt/scene.hpp"

#include <algorithm>
#include <cmath>

namespace vdt {

namespace {

constexpr double kTwoPi = 6.28318530717958647692;

struct Colors {
    static constexpr double bg0[3] = {-0.55, -0.50, -0.45};
    static constexpr double skin[3] = {0.55, 0.15, -0.10};
    static constexpr double garmentA[3] = {0.75, -0.35, -0.35};
    static constexpr double garmentB[3] = {-0.20, 0.65, 0.60};
    static constexpr double poseTorso[3] = {0.90, -0.60, -0.60};
    static constexpr double poseHead[3] = {-0.60, 0.90, -0.60};
    static constexpr double poseArm[3] = {-0.60, -0.60, 0.90};
    static constexpr double poseBg[3] = {-1.0, -1.0, -1.0};
};

// 5x7 block letter 'E' for the letter-glyph texture
constexpr int kGlyph[7][5] = {
    {1, 1, 1, 1, 1}, {1, 0, 0, 0, 0}, {1, 0, 0, 0, 0}, {1, 1, 1, 1, 0},
    {1, 0, 0, 0, 0}, {1, 0, 0, 0, 0}, {1, 1, 1, 1, 1},
};

struct FigureGeom {
    double cx, cy, theta;
    double rx, ry;          // body ellipse semi-axes
    double head_r, head_dy; // head circle (local frame)
    double arm_w, arm_len, arm_attach_x, arm_attach_y, arm_angle_l, arm_angle_r;
    double g_hw, g_hh, g_dy;  // garment half-extents and vertical offset
};

FigureGeom figure_at(const SyntheticSceneSpec& s, int64_t frame) {
    const double u =
        static_cast<double>(frame) / static_cast<double>(std::max<int64_t>(1, s.total_frames));
    FigureGeom g;
    g.cx = 0.5 * s.width + s.amp_x * s.width * std::sin(kTwoPi * s.freq * u + s.phase);
    g.cy = 0.5 * s.height + s.amp_y * s.height * std::cos(kTwoPi * s.freq * u + s.phase);
    g.theta = s.rot_amp * std::sin(kTwoPi * s.freq * u + s.phase + 1.0);
    g.rx = s.body_rx * s.width;
    g.ry = s.body_ry * s.height;
    g.head_r = 0.55 * g.rx;
    g.head_dy = -(g.ry + 1.05 * g.head_r);
    g.arm_w = 0.38 * g.rx;
    g.arm_len = 0.85 * g.ry;
    g.arm_attach_x = 0.92 * g.rx;
    g.arm_attach_y = -0.55 * g.ry;
    const double swing = 0.35 * std::sin(kTwoPi * 2.0 * s.freq * u + s.phase);
    g.arm_angle_l = 0.55 + swing;   // from vertical, leaning outward
    g.arm_angle_r = 0.55 - swing;
    g.g_hw = 0.5 * s.garment_w * s.width;
    g.g_hh = 0.5 * s.garment_h * s.height;
    g.g_dy = -0.05 * g.ry;
    return g;
}

inline void rot_inv(double theta, double x, double y, double& lx, double& ly) {
    const double c = std::cos(theta), s = std::sin(theta);
    lx = c * x + s * y;
    ly = -s * x + c * y;
}

inline bool in_ellipse(double lx, double ly, double rx, double ry) {
    const double a = lx / rx, b = ly / ry;
    return a * a + b * b <= 1.0;
}

inline bool in_arm(const FigureGeom& g, double lx, double ly, bool left) {
    const double ax = left ? -g.arm_attach_x : g.arm_attach_x;
    const double ang = left ? -g.arm_angle_l : g.arm_angle_r;  // lean outward
    double dx = lx - ax, dy = ly - g.arm_attach_y;
    // rotate into arm frame (arm extends along +y')
    const double c = std::cos(ang), s = std::sin(ang);
    const double x2 = c * dx - s * dy;
    const double y2 = s * dx + c * dy;
    return std::fabs(x2) <= 0.5 * g.arm_w && y2 >= 0.0 && y2 <= g.arm_len;
}

inline bool in_head(const FigureGeom& g, double lx, double ly) {
    const double dx = lx, dy = ly - g.head_dy;
    return dx * dx + dy * dy <= g.head_r * g.head_r;
}

inline bool in_garment_rect(const FigureGeom& g, double lx, double ly) {
    return std::fabs(lx) <= g.g_hw && std::fabs(ly - g.g_dy) <= g.g_hh;
}

void garment_color(const SyntheticSceneSpec& spec, const FigureGeom& g, double lx, double ly,
                   double* out) {
    const double u = lx + g.g_hw;          // [0, 2*g_hw)
    const double v = (ly - g.g_dy) + g.g_hh;
    const double* a = Colors::garmentA;
    const double* b = Colors::garmentB;
    bool useB = false;
    switch (spec.texture_id) {
        case 0: {  // stripes along u, period ~1/3 of the garment width
            const double period = std::max(4.0, 2.0 * g.g_hw / 3.0);
            useB = static_cast<int64_t>(std::floor(u / (0.5 * period))) % 2 == 1;
            break;
        }
        case 1: {  // checker
            const double cell = std::max(3.0, g.g_hw / 2.0);
            useB = (static_cast<int64_t>(std::floor(u / cell)) +
                    static_cast<int64_t>(std::floor(v / cell))) %
                       2 ==
                   1;
            break;
        }
        default: {  // letter glyph
            const double gu = u / (2.0 * g.g_hw) * 5.0;
            const double gv = v / (2.0 * g.g_hh) * 7.0;
            const int64_t iu = static_cast<int64_t>(std::floor(gu));
            const int64_t iv = static_cast<int64_t>(std::floor(gv));
            useB = iu >= 0 && iu < 5 && iv >= 0 && iv < 7 && kGlyph[iv][iu] == 1;
            break;
        }
    }
    const double* c = useB ? b : a;
    out[0] = c[0];
    out[1] = c[1];
    out[2] = c[2];
}

void background_color(const SyntheticSceneSpec& spec, double x, double y, double* out) {
    switch (spec.background_id) {
        case 1: {
            const double t = y / static_cast<double>(spec.height);
            out[0] = -0.8 + 0.5 * t;
            out[1] = -0.7 + 0.4 * t;
            out[2] = -0.6 + 0.3 * t;
            break;
        }
        case 2: {
            const bool b = (static_cast<int64_t>(x / 16.0) + static_cast<int64_t>(y / 16.0)) % 2;
            const double v = b ? -0.7 : -0.45;
            out[0] = v;
            out[1] = v + 0.05;
            out[2] = v + 0.1;
            break;
        }
        default:
            out[0] = Colors::bg0[0];
            out[1] = Colors::bg0[1];
            out[2] = Colors::bg0[2];
    }
}

}  // namespace

void ConditioningTuple::validate() const {
    if (x_a.ndim() != 4 || x_a.dim(3) != 3) throw DimError("ConditioningTuple: x_a [f,H,W,3]");
    if (d_p.ndim() != 4 || d_p.dim(3) != 3) throw DimError("ConditioningTuple: d_p [f,H,W,3]");
    if (m_c.ndim() != 4 || m_c.dim(3) != 1) throw DimError("ConditioningTuple: m_c [f,H,W,1]");
    if (c.ndim() != 4 || c.dim(0) != 1 || c.dim(3) != 3)
        throw DimError("ConditioningTuple: c [1,H,W,3]");
    const int64_t f = x_a.dim(0), H = x_a.dim(1), W = x_a.dim(2);
    if (d_p.dim(0) != f || m_c.dim(0) != f) throw DimError("ConditioningTuple: frame counts differ");
    if (d_p.dim(1) != H || d_p.dim(2) != W || m_c.dim(1) != H || m_c.dim(2) != W ||
        c.dim(1) != H || c.dim(2) != W)
        throw DimError("ConditioningTuple: spatial dims differ");
    for (int64_t i = 0; i < m_c.numel(); ++i)
        if (m_c[i] != 0.0 && m_c[i] != 1.0) throw DataError("ConditioningTuple: mask not binary");
}

SyntheticSceneSpec make_random_scene_spec(uint64_t seed, int64_t height, int64_t width,
                                          int64_t total_frames) {
    Rng rng = Rng::stream(seed, "scene_spec");
    SyntheticSceneSpec s;
    s.seed = seed;
    s.height = height;
    s.width = width;
    s.total_frames = total_frames;
    s.amp_x = rng.uniform(0.10, 0.17);
    s.amp_y = rng.uniform(0.02, 0.06);
    s.freq = rng.uniform(0.7, 1.6);
    s.phase = rng.uniform(0.0, kTwoPi);
    s.rot_amp = rng.uniform(0.05, 0.16);
    s.body_rx = rng.uniform(0.13, 0.17);
    s.body_ry = rng.uniform(0.24, 0.30);
    s.garment_w = rng.uniform(0.20, 0.27);
    s.garment_h = rng.uniform(0.18, 0.26);
    s.texture_id = static_cast<int>(rng.uniform_int(0, 2));
    s.background_id = static_cast<int>(rng.uniform_int(0, 2));
    return s;
}

std::pair<double, double> scene_path(const SyntheticSceneSpec& spec, int64_t frame) {
    FigureGeom g = figure_at(spec, frame);
    return {g.cx, g.cy};
}

double scene_rotation(const SyntheticSceneSpec& spec, int64_t frame) {
    return figure_at(spec, frame).theta;
}

SceneRender render_scene(const SyntheticSceneSpec& spec) {
    const int64_t F = spec.total_frames, H = spec.height, W = spec.width;
    if (F < 1) throw DataError("render_scene: total_frames >= 1 required");
    // bounds check: the figure (with arms and head) must stay inside the frame
    {
        FigureGeom g0 = figure_at(spec, 0);
        const double reach_x = g0.arm_attach_x + g0.arm_len * std::sin(1.0) + g0.arm_w;
        const double rx_max = std::max(g0.rx, reach_x) * 1.05;
        const double ry_top = (g0.ry + 2.1 * g0.head_r) * 1.05;
        const double ry_bot = std::max(g0.ry, -g0.arm_attach_y + g0.arm_len) * 1.05;
        const double span = std::max(rx_max, std::max(ry_top, ry_bot));
        if (0.5 * W - spec.amp_x * W - span < 0.0 || 0.5 * H - spec.amp_y * H - span < 0.0)
            throw DataError("render_scene: figure geometry exceeds frame bounds");
    }

    SceneRender out;
    out.video.data = Tensor({F, H, W, 3});
    out.parsing = Tensor({F, H, W, 1});
    out.pose = Tensor({F, H, W, 3});
    out.silhouette = Tensor({F, H, W, 1});

    for (int64_t fr = 0; fr < F; ++fr) {
        const FigureGeom g = figure_at(spec, fr);
        for (int64_t y = 0; y < H; ++y)
            for (int64_t x = 0; x < W; ++x) {
                const double px = static_cast<double>(x) + 0.5;
                const double py = static_cast<double>(y) + 0.5;
                double lx, ly;
                rot_inv(g.theta, px - g.cx, py - g.cy, lx, ly);

                const bool arm_l = in_arm(g, lx, ly, true);
                const bool arm_r = in_arm(g, lx, ly, false);
                const bool body = in_ellipse(lx, ly, g.rx, g.ry);
                const bool head = in_head(g, lx, ly);
                const bool garment = body && in_garment_rect(g, lx, ly);

                double* v = out.video.data.data() + ((fr * H + y) * W + x) * 3;
                double* pm = out.pose.data() + ((fr * H + y) * W + x) * 3;
                if (garment) {
                    garment_color(spec, g, lx, ly, v);
                } else if (body || head || arm_l || arm_r) {
                    v[0] = Colors::skin[0];
                    v[1] = Colors::skin[1];
                    v[2] = Colors::skin[2];
                } else {
                    background_color(spec, px, py, v);
                }
                // pose map: arms under, then torso, then head; no garment layer
                const double* pc = Colors::poseBg;
                if (arm_l || arm_r) pc = Colors::poseArm;
                if (body) pc = Colors::poseTorso;
                if (head) pc = Colors::poseHead;
                pm[0] = pc[0];
                pm[1] = pc[1];
                pm[2] = pc[2];

                out.parsing[(fr * H + y) * W + x] = garment ? 1.0 : 0.0;
                out.silhouette[(fr * H + y) * W + x] = (body || head || arm_l || arm_r) ? 1.0 : 0.0;
            }
    }
    return out;
}

void derive_agnostic(const Tensor& frame, const Tensor& garment_mask, Tensor& x_a_out,
                     Tensor& m_c_out) {
    if (frame.ndim() != 3 || frame.dim(2) != 3) throw DimError("derive_agnostic: frame [H,W,3]");
    const int64_t H = frame.dim(0), W = frame.dim(1);
    if (garment_mask.ndim() != 3 || garment_mask.dim(0) != H || garment_mask.dim(1) != W ||
        garment_mask.dim(2) != 1)
        throw DimError("derive_agnostic: mask [H,W,1]");
    for (int64_t i = 0; i < garment_mask.numel(); ++i)
        if (garment_mask[i] != 0.0 && garment_mask[i] != 1.0)
            throw DataError("derive_agnostic: mask not binary");

    x_a_out = frame;
    for (int64_t y = 0; y < H; ++y)
        for (int64_t x = 0; x < W; ++x)
            if (garment_mask.at(y, x, static_cast<int64_t>(0)) == 1.0) {
                x_a_out.at(y, x, static_cast<int64_t>(0)) = 0.0;
                x_a_out.at(y, x, static_cast<int64_t>(1)) = 0.0;
                x_a_out.at(y, x, static_cast<int64_t>(2)) = 0.0;
            }

    m_c_out = Tensor({H, W, 1});
    // 3-px Euclidean disk dilation
    static const std::vector<std::pair<int64_t, int64_t>> disk = [] {
        std::vector<std::pair<int64_t, int64_t>> d;
        for (int64_t dy = -3; dy <= 3; ++dy)
            for (int64_t dx = -3; dx <= 3; ++dx)
                if (dy * dy + dx * dx <= 9) d.emplace_back(dy, dx);
        return d;
    }();
    for (int64_t y = 0; y < H; ++y)
        for (int64_t x = 0; x < W; ++x) {
            if (garment_mask.at(y, x, static_cast<int64_t>(0)) != 1.0) continue;
            for (auto [dy, dx] : disk) {
                const int64_t yy = y + dy, xx = x + dx;
                if (yy >= 0 && yy < H && xx >= 0 && xx < W)
                    m_c_out.at(yy, xx, static_cast<int64_t>(0)) = 1.0;
            }
        }
}

Tensor garment_crop(const SceneRender& scene, int64_t frame) {
    const int64_t H = scene.video.height(), W = scene.video.width();
    Tensor c({1, H, W, 3});
    c.fill(0.0);  // neutral gray canvas
    for (int64_t y = 0; y < H; ++y)
        for (int64_t x = 0; x < W; ++x)
            if (scene.parsing.at(frame, y, x, static_cast<int64_t>(0)) == 1.0)
                for (int64_t ch = 0; ch < 3; ++ch)
                    c.at(static_cast<int64_t>(0), y, x, ch) = scene.video.data.at(frame, y, x, ch);
    return c;
}

ClipSample sample_stride_clip(const SceneRender& scene, int64_t f,
                              std::pair<int64_t, int64_t> stride_range, Rng& rng) {
    const int64_t F = scene.video.frames();
    const int64_t H = scene.video.height(), W = scene.video.width();
    if (stride_range.first < 1 || stride_range.second < stride_range.first)
        throw DataError("sample_stride_clip: bad stride range");
    if (F < stride_range.second * (f - 1) + 1)
        throw DataError("sample_stride_clip: scene too short for requested clip");

    ClipSample out;
    out.stride = rng.uniform_int(stride_range.first, stride_range.second);
    const int64_t max_start = F - 1 - out.stride * (f - 1);
    out.start = max_start > 0 ? rng.uniform_int(0, max_start) : 0;
    out.indices.resize(f);
    for (int64_t i = 0; i < f; ++i) out.indices[i] = out.start + out.stride * i;

    out.frames.data = Tensor({f, H, W, 3});
    out.frames.fps = scene.video.fps;
    out.cond.x_a = Tensor({f, H, W, 3});
    out.cond.d_p = Tensor({f, H, W, 3});
    out.cond.m_c = Tensor({f, H, W, 1});
    const int64_t fsz = H * W * 3;
    for (int64_t i = 0; i < f; ++i) {
        const int64_t src = out.indices[i];
        std::copy(scene.video.data.data() + src * fsz, scene.video.data.data() + (src + 1) * fsz,
                  out.frames.data.data() + i * fsz);
        std::copy(scene.pose.data() + src * fsz, scene.pose.data() + (src + 1) * fsz,
                  out.cond.d_p.data() + i * fsz);
        Tensor frame({H, W, 3}), mask({H, W, 1}), xa, mc;
        std::copy(scene.video.data.data() + src * fsz, scene.video.data.data() + (src + 1) * fsz,
                  frame.data());
        std::copy(scene.parsing.data() + src * H * W, scene.parsing.data() + (src + 1) * H * W,
                  mask.data());
        derive_agnostic(frame, mask, xa, mc);
        std::copy(xa.data(), xa.data() + fsz, out.cond.x_a.data() + i * fsz);
        std::copy(mc.data(), mc.data() + H * W, out.cond.m_c.data() + i * H * W);
    }
    const int64_t gframe = out.indices[rng.uniform_int(0, f - 1)];
    out.cond.c = garment_crop(scene, gframe);
    return out;
}

SwapResult random_swap(const ConditioningTuple& cond, const VideoTensor& ground_truth, int64_t k,
                       Rng& rng, bool contiguous) {
    cond.validate();
    const int64_t f = cond.frames();
    if (k < 0 || k > f) throw DimError("random_swap: k out of [0,f]");
    if (ground_truth.data.dim(0) != f) throw DimError("random_swap: ground truth frame mismatch");

    SwapResult out;
    out.control_side = cond;
    if (k == 0) return out;

    if (contiguous) {
        const int64_t start = rng.uniform_int(0, f - k);
        for (int64_t i = 0; i < k; ++i) out.swapped.push_back(start + i);
    } else {
        // partial Fisher-Yates: k distinct indices, scattered
        std::vector<int64_t> idx(f);
        for (int64_t i = 0; i < f; ++i) idx[i] = i;
        for (int64_t i = 0; i < k; ++i) {
            const int64_t j = rng.uniform_int(i, f - 1);
            std::swap(idx[i], idx[j]);
        }
        out.swapped.assign(idx.begin(), idx.begin() + k);
        std::sort(out.swapped.begin(), out.swapped.end());
    }

    const int64_t H = cond.x_a.dim(1), W = cond.x_a.dim(2);
    const int64_t fsz = H * W * 3;
    for (int64_t i : out.swapped) {
        std::copy(ground_truth.data.data() + i * fsz, ground_truth.data.data() + (i + 1) * fsz,
                  out.control_side.x_a.data() + i * fsz);
        std::fill(out.control_side.m_c.data() + i * H * W,
                  out.control_side.m_c.data() + (i + 1) * H * W, 0.0);
    }
    return out;
}

Tensor augment_garment(const Tensor& c, Rng& rng) {
    if (c.ndim() != 4 || c.dim(0) != 1 || c.dim(3) != 3)
        throw DimError("augment_garment: expect [1,H,W,3]");
    if (c.numel() == 0) throw DimError("augment_garment: empty garment image");
    const int64_t H = c.dim(1), W = c.dim(2);
    const double deg15 = 15.0 * 3.14159265358979323846 / 180.0;
    const double theta = rng.uniform(-deg15, deg15);
    const double s = rng.uniform(0.8, 1.2);
    const double cx = 0.5 * static_cast<double>(W), cy = 0.5 * static_cast<double>(H);
    const double cth = std::cos(theta), sth = std::sin(theta);

    auto reflect = [](double v, int64_t n) {
        const double period = 2.0 * static_cast<double>(n);
        v = std::fmod(v, period);
        if (v < 0) v += period;
        if (v >= static_cast<double>(n)) v = period - v - 1e-9;
        return v;
    };

    Tensor out({1, H, W, 3});
    for (int64_t y = 0; y < H; ++y)
        for (int64_t x = 0; x < W; ++x) {
            // inverse map: output pixel -> source location
            const double dx = (static_cast<double>(x) - cx) / s;
            const double dy = (static_cast<double>(y) - cy) / s;
            double qx = cth * dx + sth * dy + cx;
            double qy = -sth * dx + cth * dy + cy;
            qx = reflect(qx, W);
            qy = reflect(qy, H);
            const int64_t x0 = std::min<int64_t>(static_cast<int64_t>(qx), W - 1);
            const int64_t y0 = std::min<int64_t>(static_cast<int64_t>(qy), H - 1);
            const int64_t x1 = std::min<int64_t>(x0 + 1, W - 1);
            const int64_t y1 = std::min<int64_t>(y0 + 1, H - 1);
            const double fx = qx - static_cast<double>(x0);
            const double fy = qy - static_cast<double>(y0);
            for (int64_t ch = 0; ch < 3; ++ch) {
                const double v00 = c.at(static_cast<int64_t>(0), y0, x0, ch);
                const double v01 = c.at(static_cast<int64_t>(0), y0, x1, ch);
                const double v10 = c.at(static_cast<int64_t>(0), y1, x0, ch);
                const double v11 = c.at(static_cast<int64_t>(0), y1, x1, ch);
                out.at(static_cast<int64_t>(0), y, x, ch) =
                    (1 - fy) * ((1 - fx) * v00 + fx * v01) + fy * ((1 - fx) * v10 + fx * v11);
            }
        }
    return out;
}

Tensor resize_mask_nearest(const Tensor& m, int64_t factor) {
    if (m.ndim() != 4 || m.dim(3) != 1) throw DimError("resize_mask_nearest: expect [f,H,W,1]");
    const int64_t f = m.dim(0), H = m.dim(1), W = m.dim(2);
    if (H % factor != 0 || W % factor != 0)
        throw DimError("resize_mask_nearest: dims not divisible by factor");
    const int64_t h = H / factor, w = W / factor;
    Tensor out({f, h, w, 1});
    const int64_t off = factor / 2;  // sample at the cell center
    for (int64_t fr = 0; fr < f; ++fr)
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x)
                out.at(fr, y, x, static_cast<int64_t>(0)) =
                    m.at(fr, y * factor + off, x * factor + off, static_cast<int64_t>(0));
    return out;
}

ControlInput build_control_input(const ConditioningTuple& cond, const Codec& codec) {
    cond.validate();
    VideoLatent z_a = codec.encode(VideoTensor{cond.x_a});
    VideoLatent z_p = codec.encode(VideoTensor{cond.d_p});
    Tensor m_small = resize_mask_nearest(cond.m_c, 8);
    const int64_t f = z_a.frames(), h = z_a.h(), w = z_a.w();
    Tensor out({f, h, w, 9});
    for (int64_t i = 0; i < f * h * w; ++i) {
        double* d = out.data() + i * 9;
        const double* a = z_a.data.data() + i * 4;
        const double* p = z_p.data.data() + i * 4;
        std::copy(a, a + 4, d);
        std::copy(p, p + 4, d + 4);
        d[8] = m_small[i];
    }
    return ControlInput{std::move(out)};
}

}  // namespace vdt
