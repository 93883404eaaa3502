#include "dposelets/harness/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "dposelets/harness/io.hpp"

namespace dposelets::harness {

using imaging::Image;
using poselets::KeypointName;
using poselets::PersonAnnotation;

void ToyCorpusConfig::validate() const {
  if (train_images < 1 || test_images < 0 || pool_images < 0 || pool_backgrounds < 0) throw Error(Errc::InvalidConfig, "image counts");
  if (width < imaging::kPatchSide || height < imaging::kPatchSide) {
    throw Error(Errc::InvalidConfig, "toy images must be at least 61 pixels on each side");
  }
  if (!(min_person_height > 0 && max_person_height >= min_person_height && max_person_height < height)) {
    throw Error(Errc::InvalidConfig, "person height range must be positive and fit the image height");
  }
  if (max_persons < 1) throw Error(Errc::InvalidConfig, "max_persons must be at least 1");
  if (!(empty_fraction >= 0 && empty_fraction < 1)) throw Error(Errc::InvalidConfig, "empty_fraction must be in [0,1)");
}

namespace {

using Color = std::array<float, 3>;
constexpr double kPi = std::numbers::pi;

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Color random_color(std::mt19937_64& rng, double lo = 0.05, double hi = 0.95) {
  return {static_cast<float>(uniform(rng, lo, hi)), static_cast<float>(uniform(rng, lo, hi)),
          static_cast<float>(uniform(rng, lo, hi))};
}

void blend(Image& img, int x, int y, const Color& c, double alpha) {
  if (alpha <= 0) return;
  const float a = static_cast<float>(std::min(alpha, 1.0));
  for (int k = 0; k < 3; ++k) img.at(x, y, k) = img.at(x, y, k) * (1 - a) + c[k] * a;
}

/// Paints coverage = clamp(0.5 - sdf, 0, 1) inside the given bounding box.
template <class Sdf>
void paint(Image& img, double x0, double y0, double x1, double y1, const Color& c, Sdf sdf) {
  const int ix0 = std::max(0, static_cast<int>(std::floor(x0 - 1)));
  const int iy0 = std::max(0, static_cast<int>(std::floor(y0 - 1)));
  const int ix1 = std::min(img.width() - 1, static_cast<int>(std::ceil(x1 + 1)));
  const int iy1 = std::min(img.height() - 1, static_cast<int>(std::ceil(y1 + 1)));
  for (int y = iy0; y <= iy1; ++y) {
    for (int x = ix0; x <= ix1; ++x) blend(img, x, y, c, std::clamp(0.5 - sdf(x + 0.5, y + 0.5), 0.0, 1.0));
  }
}

double segment_distance(Point p, Point a, Point b) {
  const double vx = b.x - a.x, vy = b.y - a.y;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0 ? ((p.x - a.x) * vx + (p.y - a.y) * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return std::hypot(p.x - (a.x + t * vx), p.y - (a.y + t * vy));
}

void capsule(Image& img, Point a, Point b, double r, const Color& c) {
  paint(img, std::min(a.x, b.x) - r, std::min(a.y, b.y) - r, std::max(a.x, b.x) + r, std::max(a.y, b.y) + r, c,
        [&](double x, double y) { return segment_distance({x, y}, a, b) - r; });
}

void disk(Image& img, Point ctr, double r, const Color& c) {
  paint(img, ctr.x - r, ctr.y - r, ctr.x + r, ctr.y + r, c,
        [&](double x, double y) { return std::hypot(x - ctr.x, y - ctr.y) - r; });
}

/// Convex polygon, vertices in clockwise screen order (y down).
void polygon(Image& img, const std::vector<Point>& v, const Color& c) {
  double x0 = v[0].x, y0 = v[0].y, x1 = x0, y1 = y0;
  for (const auto& p : v) {
    x0 = std::min(x0, p.x), y0 = std::min(y0, p.y), x1 = std::max(x1, p.x), y1 = std::max(y1, p.y);
  }
  paint(img, x0, y0, x1, y1, c, [&](double x, double y) {
    double d = -1e30;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const Point a = v[i], b = v[(i + 1) % v.size()];
      const double ex = b.x - a.x, ey = b.y - a.y;
      const double len = std::hypot(ex, ey);
      // Outward normal of a clockwise (screen) polygon is (ey, -ex).
      d = std::max(d, ((x - a.x) * ey - (y - a.y) * ex) / len);
    }
    return d;
  });
}

struct Figure {
  std::array<Point, poselets::kKeypointCount> kp{};
  std::array<bool, poselets::kKeypointCount> visible{};
  double head_r = 0, arm_r = 0, leg_r = 0, torso_pad = 0;
  Color skin{}, shirt{}, pants{}, hair{};
  bool long_sleeves = false;
  double min_x = 0, min_y = 0, max_x = 0, max_y = 0;

  Point& at(KeypointName k) { return kp[static_cast<std::size_t>(k)]; }
  const Point& at(KeypointName k) const { return kp[static_cast<std::size_t>(k)]; }
};

/// The head disk sits one radius below the top, along the top-to-neck axis.
Point head_center(const Figure& f) {
  const Point top = f.at(KeypointName::HeadTop), neck = f.at(KeypointName::Neck);
  const double dx = neck.x - top.x, dy = neck.y - top.y;
  const double len = std::hypot(dx, dy);
  return {top.x + dx / len * f.head_r, top.y + dy / len * f.head_r};
}

Point polar(Point from, double length, double angle) {
  // angle 0 points straight down.
  return {from.x + length * std::sin(angle), from.y + length * std::cos(angle)};
}

Figure random_figure(double height, std::mt19937_64& rng) {
  using K = KeypointName;
  Figure f;
  const double H = height / 1.02;  // head top to the sole of the feet
  const double turn = uniform(rng, 0.0, 1.0) < 0.7 ? uniform(rng, 0.85, 1.0) : uniform(rng, 0.5, 0.85);
  const double facing = uniform(rng, 0.0, 1.0) < 0.5 ? -1.0 : 1.0;
  const double lean = uniform(rng, -0.06, 0.06);
  f.head_r = 0.062 * H;
  f.arm_r = 0.026 * H * uniform(rng, 0.85, 1.15);
  f.leg_r = 0.033 * H * uniform(rng, 0.85, 1.15);
  f.torso_pad = 0.02 * H;
  const double face_shift = facing * (1.0 - turn) * 0.05 * H;

  const Point head{face_shift * 0.3, f.head_r};
  f.at(K::HeadTop) = {head.x, 0.0};
  f.at(K::Nose) = {head.x + face_shift, 0.085 * H};
  f.at(K::LEye) = {head.x + face_shift + 0.023 * H * turn, 0.058 * H};
  f.at(K::REye) = {head.x + face_shift - 0.023 * H * turn, 0.058 * H};
  f.at(K::LEar) = {head.x + 0.06 * H * turn, 0.068 * H};
  f.at(K::REar) = {head.x - 0.06 * H * turn, 0.068 * H};
  f.at(K::Neck) = {0.0, 0.15 * H};
  const double sw = 0.115 * H * turn, hw = 0.072 * H * turn;
  f.at(K::LShoulder) = {sw, 0.185 * H};
  f.at(K::RShoulder) = {-sw, 0.185 * H};
  f.at(K::Pelvis) = {0.0, 0.5 * H};
  f.at(K::LHip) = {hw, 0.5 * H};
  f.at(K::RHip) = {-hw, 0.5 * H};

  // Arm and leg angles; positive swings away from the body's midline.
  for (int side = 0; side < 2; ++side) {
    const double s = side == 0 ? 1.0 : -1.0;
    const K shoulder = side == 0 ? K::LShoulder : K::RShoulder;
    const K elbow = side == 0 ? K::LElbow : K::RElbow;
    const K wrist = side == 0 ? K::LWrist : K::RWrist;
    const double upper = uniform(rng, -0.15, 1.6);
    const double fore = upper + uniform(rng, -0.6, 1.4);
    f.at(elbow) = polar(f.at(shoulder), 0.165 * H, s * upper);
    f.at(wrist) = polar(f.at(elbow), 0.15 * H, s * fore);

    const K hip = side == 0 ? K::LHip : K::RHip;
    const K knee = side == 0 ? K::LKnee : K::RKnee;
    const K ankle = side == 0 ? K::LAnkle : K::RAnkle;
    const double thigh = uniform(rng, -0.12, 0.45);
    const double shin = thigh + uniform(rng, -0.35, 0.25);
    f.at(knee) = polar(f.at(hip), 0.245 * H, s * thigh);
    f.at(ankle) = polar(f.at(knee), 0.235 * H, s * shin);
  }
  // Whole-body lean about the pelvis.
  const Point pivot = f.at(K::Pelvis);
  const double c = std::cos(lean), sn = std::sin(lean);
  for (auto& p : f.kp) {
    const double dx = p.x - pivot.x, dy = p.y - pivot.y;
    p = {pivot.x + c * dx - sn * dy, pivot.y + sn * dx + c * dy};
  }
  f.visible.fill(true);
  if (turn < 0.75) {
    // The far ear hides behind the head in a strong turn.
    f.visible[static_cast<std::size_t>(facing > 0 ? K::REar : K::LEar)] = false;
  }

  f.skin = {static_cast<float>(uniform(rng, 0.45, 0.95)), 0, 0};
  f.skin[1] = static_cast<float>(f.skin[0] * uniform(rng, 0.7, 0.85));
  f.skin[2] = static_cast<float>(f.skin[0] * uniform(rng, 0.55, 0.75));
  f.shirt = random_color(rng);
  f.pants = random_color(rng, 0.05, 0.6);
  f.hair = random_color(rng, 0.02, 0.5);
  f.long_sleeves = uniform(rng, 0.0, 1.0) < 0.5;

  // Bounds of every drawn primitive.
  const Point hc = head_center(f);
  f.min_x = f.max_x = hc.x;
  f.min_y = f.max_y = hc.y;
  auto grow = [&](Point p, double r) {
    f.min_x = std::min(f.min_x, p.x - r), f.max_x = std::max(f.max_x, p.x + r);
    f.min_y = std::min(f.min_y, p.y - r), f.max_y = std::max(f.max_y, p.y + r);
  };
  grow({hc.x, hc.y - 0.12 * f.head_r}, f.head_r);
  for (K k : {K::LShoulder, K::RShoulder, K::LHip, K::RHip}) grow(f.at(k), f.torso_pad);
  for (K k : {K::LElbow, K::RElbow}) grow(f.at(k), f.arm_r * 1.15);
  for (K k : {K::LWrist, K::RWrist}) grow(f.at(k), f.arm_r * 1.3);
  for (K k : {K::LKnee, K::RKnee}) grow(f.at(k), f.leg_r);
  for (K k : {K::LAnkle, K::RAnkle}) grow({f.at(k).x, f.at(k).y + f.leg_r * 0.6}, f.leg_r * 0.9);
  return f;
}

void draw_figure(Image& img, const Figure& f, double ox, double oy) {
  using K = KeypointName;
  auto P = [&](K k) { return Point{f.at(k).x + ox, f.at(k).y + oy}; };
  // Legs behind the torso.
  for (auto [hip, knee, ankle] : {std::array{K::LHip, K::LKnee, K::LAnkle}, std::array{K::RHip, K::RKnee, K::RAnkle}}) {
    capsule(img, P(hip), P(knee), f.leg_r, f.pants);
    capsule(img, P(knee), P(ankle), f.leg_r * 0.9, f.pants);
    capsule(img, P(ankle), {P(ankle).x, P(ankle).y + f.leg_r * 0.6}, f.leg_r * 0.8, {0.08f, 0.06f, 0.05f});
  }
  const double pad = f.torso_pad;
  const Point ls = P(K::LShoulder), rs = P(K::RShoulder), lh = P(K::LHip), rh = P(K::RHip);
  // Clockwise in screen coordinates: right shoulder (left in image), top edge, left side, bottom.
  polygon(img, {{rs.x - pad, rs.y - pad}, {ls.x + pad, ls.y - pad}, {lh.x + pad, lh.y + pad}, {rh.x - pad, rh.y + pad}},
          f.shirt);
  capsule(img, P(K::Neck), {P(K::Neck).x, P(K::Neck).y + 0.02 * (rh.y - rs.y)}, f.arm_r, f.skin);
  // Head: hair disk slightly larger at the top, then the face.
  const Point hc{head_center(f).x + ox, head_center(f).y + oy};
  disk(img, {hc.x, hc.y - 0.12 * f.head_r}, f.head_r * 0.98, f.hair);
  disk(img, {hc.x, hc.y + 0.08 * f.head_r}, f.head_r * 0.88, f.skin);
  for (K eye : {K::LEye, K::REye}) disk(img, P(eye), std::max(0.8, 0.12 * f.head_r), {0.05f, 0.05f, 0.08f});
  capsule(img, P(K::Nose), {P(K::Nose).x, P(K::Nose).y + 0.1 * f.head_r}, std::max(0.6, 0.07 * f.head_r),
          {f.skin[0] * 0.8f, f.skin[1] * 0.75f, f.skin[2] * 0.7f});
  // Arms in front of the torso.
  for (auto [sh, el, wr] :
       {std::array{K::LShoulder, K::LElbow, K::LWrist}, std::array{K::RShoulder, K::RElbow, K::RWrist}}) {
    capsule(img, P(sh), P(el), f.arm_r * 1.15, f.shirt);
    capsule(img, P(el), P(wr), f.arm_r, f.long_sleeves ? f.shirt : f.skin);
    disk(img, P(wr), f.arm_r * 1.3, f.skin);
  }
}

void add_noise(Image& img, double sigma, std::mt19937_64& rng) {
  std::normal_distribution<float> n(0.0f, static_cast<float>(sigma));
  for (auto& v : img.data()) v = std::clamp(v + n(rng), 0.0f, 1.0f);
}

}  // namespace

Image render_background(int width, int height, std::mt19937_64& rng) {
  Image img(width, height, 3);
  const Color a = random_color(rng, 0.1, 0.9), b = random_color(rng, 0.1, 0.9);
  const double gx = uniform(rng, -1, 1), gy = uniform(rng, -1, 1);
  struct Wave {
    double fx, fy, phase, amp;
    int channel;
  };
  std::vector<Wave> waves;
  for (int k = 0; k < 6; ++k) {
    waves.push_back({uniform(rng, -0.06, 0.06), uniform(rng, -0.06, 0.06), uniform(rng, 0, 2 * kPi),
                     uniform(rng, 0.02, 0.08), static_cast<int>(uniform(rng, 0, 3))});
  }
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double t = std::clamp(0.5 + 0.5 * (gx * (x / double(width) - 0.5) + gy * (y / double(height) - 0.5)), 0.0, 1.0);
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = static_cast<float>(a[c] * (1 - t) + b[c] * t);
      for (const auto& w : waves) {
        float& v = img.at(x, y, std::min(w.channel, 2));
        v = static_cast<float>(std::clamp(v + w.amp * std::sin(w.fx * x + w.fy * y + w.phase), 0.0, 1.0));
      }
    }
  }
  // Clutter: boxes, disks and sticks.
  const int clutter = static_cast<int>(uniform(rng, 6, 16));
  for (int k = 0; k < clutter; ++k) {
    const Color c = random_color(rng);
    const double kind = uniform(rng, 0, 3);
    const double cx = uniform(rng, 0, width), cy = uniform(rng, 0, height);
    if (kind < 1) {
      const double w = uniform(rng, 8, 70), h = uniform(rng, 8, 70);
      polygon(img, {{cx, cy}, {cx + w, cy}, {cx + w, cy + h}, {cx, cy + h}}, c);
    } else if (kind < 2) {
      disk(img, {cx, cy}, uniform(rng, 4, 30), c);
    } else {
      const double ang = uniform(rng, 0, 2 * kPi), len = uniform(rng, 15, 90);
      capsule(img, {cx, cy}, {cx + len * std::cos(ang), cy + len * std::sin(ang)}, uniform(rng, 1.5, 7), c);
    }
  }
  return img;
}

PersonAnnotation plant_person(Image& canvas, double x, double y, double height, std::mt19937_64& rng) {
  const Figure f = random_figure(height, rng);
  const double ox = x - f.min_x, oy = y - f.min_y;
  draw_figure(canvas, f, ox, oy);
  PersonAnnotation p;
  p.bounds = {x, y, f.max_x - f.min_x, f.max_y - f.min_y};
  for (int k = 0; k < poselets::kKeypointCount; ++k) {
    p.keypoints.push_back({static_cast<KeypointName>(k), f.kp[k].x + ox, f.kp[k].y + oy, f.visible[k]});
  }
  return p;
}

Box person_extent(double height, std::mt19937_64 rng) {
  const Figure f = random_figure(height, rng);
  return {0, 0, f.max_x - f.min_x, f.max_y - f.min_y};
}

poselets::AnnotatedImage render_toy_image(const std::string& id, int width, int height, int persons,
                                          double min_person_height, double max_person_height, std::uint64_t seed) {
  std::seed_seq seq{seed, std::uint64_t{0x706f73}};
  std::mt19937_64 rng(seq);
  poselets::AnnotatedImage out;
  out.id = id;
  out.image = render_background(width, height, rng);
  for (int n = 0; n < persons; ++n) {
    for (int attempt = 0; attempt < 40; ++attempt) {
      const double h = uniform(rng, min_person_height, max_person_height);
      const Box ext = person_extent(h, rng);
      if (ext.w > width - 4 || ext.h > height - 4) continue;
      const double x = uniform(rng, 2, width - 2 - ext.w), y = uniform(rng, 2, height - 2 - ext.h);
      const Box b{x, y, ext.w, ext.h};
      const bool clear = std::none_of(out.persons.begin(), out.persons.end(),
                                      [&](const PersonAnnotation& p) { return iou(p.bounds, b) > 0.05; });
      if (!clear) continue;
      auto p = plant_person(out.image, x, y, h, rng);
      p.image_id = id;
      out.persons.push_back(std::move(p));
      break;
    }
  }
  add_noise(out.image, 0.015, rng);
  return out;
}

poselets::Corpus generate_toy_split(const ToyCorpusConfig& cfg, const std::string& split) {
  cfg.validate();
  int count = 0;
  std::uint64_t tag = 0;
  if (split == "train") count = cfg.train_images, tag = 1;
  else if (split == "test") count = cfg.test_images, tag = 2;
  else if (split == "pool") count = cfg.pool_images, tag = 3;
  else throw Error(Errc::InvalidConfig, "unknown split '" + split + "'");
  std::seed_seq seq{cfg.seed, tag};
  std::mt19937_64 rng(seq);
  poselets::Corpus out;
  for (int i = 0; i < count; ++i) {
    int persons = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(cfg.max_persons));
    // The pool feeds example selection; it is never empty and always crowded.
    if (split == "pool") persons = cfg.max_persons;
    else if (uniform(rng, 0.0, 1.0) < cfg.empty_fraction) persons = 0;
    char id[32];
    std::snprintf(id, sizeof id, "%s_%04d", split.c_str(), i);
    out.push_back(render_toy_image(id, cfg.width, cfg.height, persons, cfg.min_person_height, cfg.max_person_height,
                                   rng()));
  }
  if (split == "pool") {
    std::seed_seq bg_seq{cfg.seed, std::uint64_t{4}};
    std::mt19937_64 bg(bg_seq);
    for (int i = 0; i < cfg.pool_backgrounds; ++i) {
      char id[32];
      std::snprintf(id, sizeof id, "pool_bg_%04d", i);
      out.push_back(render_toy_image(id, cfg.width, cfg.height, 0, cfg.min_person_height, cfg.max_person_height, bg()));
    }
  }
  return out;
}

ToyCorpus generate_toy_corpus(const ToyCorpusConfig& cfg) {
  return {generate_toy_split(cfg, "train"), generate_toy_split(cfg, "test"), generate_toy_split(cfg, "pool")};
}

void write_toy_corpus(const ToyCorpus& corpus, const std::filesystem::path& dir) {
  write_manifest(corpus.train, dir / "train.jsonl");
  write_manifest(corpus.test, dir / "test.jsonl");
  write_manifest(corpus.pool, dir / "pool.jsonl");
}

std::vector<PoseletSpec> default_poselet_specs() {
  using K = KeypointName;
  return {
      {"head_shoulders", {K::HeadTop, K::Nose, K::Neck, K::LShoulder, K::RShoulder}, 0.42},
      {"upper_body", {K::HeadTop, K::LShoulder, K::RShoulder, K::LHip, K::RHip}, 0.7},
      {"torso", {K::LShoulder, K::RShoulder, K::LHip, K::RHip}, 0.5},
      {"legs", {K::LHip, K::RHip, K::LKnee, K::RKnee, K::LAnkle, K::RAnkle}, 0.6},
      {"full_body", {}, 1.05},
  };
}

poselets::SeedWindow seed_from_person(const PoseletSpec& spec, const PersonAnnotation& person) {
  double cx = person.bounds.cx(), cy = person.bounds.cy();
  if (!spec.anchors.empty()) {
    cx = cy = 0.0;
    for (auto a : spec.anchors) {
      const auto* k = person.find(a);
      if (!k || !k->visible) throw Error(Errc::TooFewCorrespondences, "anchor keypoint missing for " + spec.name);
      cx += k->x;
      cy += k->y;
    }
    cx /= static_cast<double>(spec.anchors.size());
    cy /= static_cast<double>(spec.anchors.size());
  }
  const double side = spec.side_factor * person.bounds.h;
  return poselets::make_seed(spec.name, person, Box::from_center(cx, cy, side, side));
}

std::vector<poselets::SeedWindow> make_seeds(const poselets::Corpus& corpus, std::span<const PoseletSpec> specs) {
  std::vector<poselets::SeedWindow> out;
  for (const auto& spec : specs) {
    bool found = false;
    for (const auto& img : corpus) {
      for (const auto& p : img.persons) {
        const bool ok = std::all_of(spec.anchors.begin(), spec.anchors.end(), [&](KeypointName a) {
          const auto* k = p.find(a);
          return k && k->visible;
        });
        if (!ok) continue;
        try {
          out.push_back(seed_from_person(spec, p));
          found = true;
        } catch (const Error&) {
          continue;
        }
        break;
      }
      if (found) break;
    }
    if (!found) throw Error(Errc::NoMatchingExamples, "no person in the corpus can seed " + spec.name);
  }
  return out;
}

}  // namespace dposelets::harness
