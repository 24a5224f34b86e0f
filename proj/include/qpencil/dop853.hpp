#pragma once

// Dormand-Prince 8(5,3) with 7th order dense output, after Hairer's DOP853.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace qpencil {

namespace dop853_tableau {
inline constexpr double c2 = 0.526001519587677318785587544488e-01;
inline constexpr double c3 = 0.789002279381515978178381316732e-01;
inline constexpr double c4 = 0.118350341907227396726757197510e+00;
inline constexpr double c5 = 0.281649658092772603273242802490e+00;
inline constexpr double c6 = 0.333333333333333333333333333333e+00;
inline constexpr double c7 = 0.25e+00;
inline constexpr double c8 = 0.307692307692307692307692307692e+00;
inline constexpr double c9 = 0.651282051282051282051282051282e+00;
inline constexpr double c10 = 0.6e+00;
inline constexpr double c11 = 0.857142857142857142857142857142e+00;
inline constexpr double c14 = 0.1e+00;
inline constexpr double c15 = 0.2e+00;
inline constexpr double c16 = 0.777777777777777777777777777778e+00;
inline constexpr double a21 = 5.26001519587677318785587544488e-2;
inline constexpr double a31 = 1.97250569845378994544595329183e-2;
inline constexpr double a32 = 5.91751709536136983633785987549e-2;
inline constexpr double a41 = 2.95875854768068491816892993775e-2;
inline constexpr double a43 = 8.87627564304205475450678981324e-2;
inline constexpr double a51 = 2.41365134159266685502369798665e-1;
inline constexpr double a53 = -8.84549479328286085344864962717e-1;
inline constexpr double a54 = 9.24834003261792003115737966543e-1;
inline constexpr double a61 = 3.7037037037037037037037037037e-2;
inline constexpr double a64 = 1.70828608729473871279604482173e-1;
inline constexpr double a65 = 1.25467687566822425016691814123e-1;
inline constexpr double a71 = 3.7109375e-2;
inline constexpr double a74 = 1.70252211019544039314978060272e-1;
inline constexpr double a75 = 6.02165389804559606850219397283e-2;
inline constexpr double a76 = -1.7578125e-2;
inline constexpr double a81 = 3.70920001185047927108779319836e-2;
inline constexpr double a84 = 1.70383925712239993810214054705e-1;
inline constexpr double a85 = 1.07262030446373284651809199168e-1;
inline constexpr double a86 = -1.53194377486244017527936158236e-2;
inline constexpr double a87 = 8.27378916381402288758473766002e-3;
inline constexpr double a91 = 6.24110958716075717114429577812e-1;
inline constexpr double a94 = -3.36089262944694129406857109825e0;
inline constexpr double a95 = -8.68219346841726006818189891453e-1;
inline constexpr double a96 = 2.75920996994467083049415600797e1;
inline constexpr double a97 = 2.01540675504778934086186788979e1;
inline constexpr double a98 = -4.34898841810699588477366255144e1;
inline constexpr double a101 = 4.77662536438264365890433908527e-1;
inline constexpr double a104 = -2.48811461997166764192642586468e0;
inline constexpr double a105 = -5.90290826836842996371446475743e-1;
inline constexpr double a106 = 2.12300514481811942347288949897e1;
inline constexpr double a107 = 1.52792336328824235832596922938e1;
inline constexpr double a108 = -3.32882109689848629194453265587e1;
inline constexpr double a109 = -2.03312017085086261358222928593e-2;
inline constexpr double a111 = -9.3714243008598732571704021658e-1;
inline constexpr double a114 = 5.18637242884406370830023853209e0;
inline constexpr double a115 = 1.09143734899672957818500254654e0;
inline constexpr double a116 = -8.14978701074692612513997267357e0;
inline constexpr double a117 = -1.85200656599969598641566180701e1;
inline constexpr double a118 = 2.27394870993505042818970056734e1;
inline constexpr double a119 = 2.49360555267965238987089396762e0;
inline constexpr double a1110 = -3.0467644718982195003823669022e0;
inline constexpr double a121 = 2.27331014751653820792359768449e0;
inline constexpr double a124 = -1.05344954667372501984066689879e1;
inline constexpr double a125 = -2.00087205822486249909675718444e0;
inline constexpr double a126 = -1.79589318631187989172765950534e1;
inline constexpr double a127 = 2.79488845294199600508499808837e1;
inline constexpr double a128 = -2.85899827713502369474065508674e0;
inline constexpr double a129 = -8.87285693353062954433549289258e0;
inline constexpr double a1210 = 1.23605671757943030647266201528e1;
inline constexpr double a1211 = 6.43392746015763530355970484046e-1;
inline constexpr double a141 = 5.61675022830479523392909219681e-2;
inline constexpr double a147 = 2.53500210216624811088794765333e-1;
inline constexpr double a148 = -2.46239037470802489917441475441e-1;
inline constexpr double a149 = -1.24191423263816360469010140626e-1;
inline constexpr double a1410 = 1.5329179827876569731206322685e-1;
inline constexpr double a1411 = 8.20105229563468988491666602057e-3;
inline constexpr double a1412 = 7.56789766054569976138603589584e-3;
inline constexpr double a1413 = -8.298e-3;
inline constexpr double a151 = 3.18346481635021405060768473261e-2;
inline constexpr double a156 = 2.83009096723667755288322961402e-2;
inline constexpr double a157 = 5.35419883074385676223797384372e-2;
inline constexpr double a158 = -5.49237485713909884646569340306e-2;
inline constexpr double a1511 = -1.08347328697249322858509316994e-4;
inline constexpr double a1512 = 3.82571090835658412954920192323e-4;
inline constexpr double a1513 = -3.40465008687404560802977114492e-4;
inline constexpr double a1514 = 1.41312443674632500278074618366e-1;
inline constexpr double a161 = -4.28896301583791923408573538692e-1;
inline constexpr double a166 = -4.69762141536116384314449447206e0;
inline constexpr double a167 = 7.68342119606259904184240953878e0;
inline constexpr double a168 = 4.06898981839711007970213554331e0;
inline constexpr double a169 = 3.56727187455281109270669543021e-1;
inline constexpr double a1613 = -1.39902416515901462129418009734e-3;
inline constexpr double a1614 = 2.9475147891527723389556272149e0;
inline constexpr double a1615 = -9.15095847217987001081870187138e0;
inline constexpr double b1 = 5.42937341165687622380535766363e-2;
inline constexpr double b6 = 4.45031289275240888144113950566e0;
inline constexpr double b7 = 1.89151789931450038304281599044e0;
inline constexpr double b8 = -5.8012039600105847814672114227e0;
inline constexpr double b9 = 3.1116436695781989440891606237e-1;
inline constexpr double b10 = -1.52160949662516078556178806805e-1;
inline constexpr double b11 = 2.01365400804030348374776537501e-1;
inline constexpr double b12 = 4.47106157277725905176885569043e-2;
inline constexpr double e31 = 0.244094488188976377952755905512e+00;
inline constexpr double e32 = 0.733846688281611857341361741547e+00;
inline constexpr double e33 = 0.220588235294117647058823529412e-01;
inline constexpr double e51 = 0.1312004499419488073250102996e-01;
inline constexpr double e56 = -0.1225156446376204440720569753e+01;
inline constexpr double e57 = -0.4957589496572501915214079952e+00;
inline constexpr double e58 = 0.1664377182454986536961530415e+01;
inline constexpr double e59 = -0.3503288487499736816886487290e+00;
inline constexpr double e510 = 0.3341791187130174790297318841e+00;
inline constexpr double e511 = 0.8192320648511571246570742613e-01;
inline constexpr double e512 = -0.2235530786388629525884427845e-01;
inline constexpr double d41 = -0.84289382761090128651353491142e+01;
inline constexpr double d46 = 0.56671495351937776962531783590e+00;
inline constexpr double d47 = -0.30689499459498916912797304727e+01;
inline constexpr double d48 = 0.23846676565120698287728149680e+01;
inline constexpr double d49 = 0.21170345824450282767155149946e+01;
inline constexpr double d410 = -0.87139158377797299206789907490e+00;
inline constexpr double d411 = 0.22404374302607882758541771650e+01;
inline constexpr double d412 = 0.63157877876946881815570249290e+00;
inline constexpr double d413 = -0.88990336451333310820698117400e-01;
inline constexpr double d414 = 0.18148505520854727256656404962e+02;
inline constexpr double d415 = -0.91946323924783554000451984436e+01;
inline constexpr double d416 = -0.44360363875948939664310572000e+01;
inline constexpr double d51 = 0.10427508642579134603413151009e+02;
inline constexpr double d56 = 0.24228349177525818288430175319e+03;
inline constexpr double d57 = 0.16520045171727028198505394887e+03;
inline constexpr double d58 = -0.37454675472269020279518312152e+03;
inline constexpr double d59 = -0.22113666853125306036270938578e+02;
inline constexpr double d510 = 0.77334326684722638389603898808e+01;
inline constexpr double d511 = -0.30674084731089398182061213626e+02;
inline constexpr double d512 = -0.93321305264302278729567221706e+01;
inline constexpr double d513 = 0.15697238121770843886131091075e+02;
inline constexpr double d514 = -0.31139403219565177677282850411e+02;
inline constexpr double d515 = -0.93529243588444783865713862664e+01;
inline constexpr double d516 = 0.35816841486394083752465898540e+02;
inline constexpr double d61 = 0.19985053242002433820987653617e+02;
inline constexpr double d66 = -0.38703730874935176555105901742e+03;
inline constexpr double d67 = -0.18917813819516756882830838328e+03;
inline constexpr double d68 = 0.52780815920542364900561016686e+03;
inline constexpr double d69 = -0.11573902539959630126141871134e+02;
inline constexpr double d610 = 0.68812326946963000169666922661e+01;
inline constexpr double d611 = -0.10006050966910838403183860980e+01;
inline constexpr double d612 = 0.77771377980534432092869265740e+00;
inline constexpr double d613 = -0.27782057523535084065932004339e+01;
inline constexpr double d614 = -0.60196695231264120758267380846e+02;
inline constexpr double d615 = 0.84320405506677161018159903784e+02;
inline constexpr double d616 = 0.11992291136182789328035130030e+02;
inline constexpr double d71 = -0.25693933462703749003312586129e+02;
inline constexpr double d76 = -0.15418974869023643374053993627e+03;
inline constexpr double d77 = -0.23152937917604549567536039109e+03;
inline constexpr double d78 = 0.35763911791061412378285349910e+03;
inline constexpr double d79 = 0.93405324183624310003907691704e+02;
inline constexpr double d710 = -0.37458323136451633156875139351e+02;
inline constexpr double d711 = 0.10409964950896230045147246184e+03;
inline constexpr double d712 = 0.29840293426660503123344363579e+02;
inline constexpr double d713 = -0.43533456590011143754432175058e+02;
inline constexpr double d714 = 0.96324553959188282948394950600e+02;
inline constexpr double d715 = -0.39177261675615439165231486172e+02;
inline constexpr double d716 = -0.14972683625798562581422125276e+03;
}  // namespace dop853_tableau

struct Dop853Options {
  double rtol = 1e-12;
  double atol = 1e-14;
  double h_init = 0.0;
  long max_steps = 1000000;
};

struct Dop853Stats {
  long steps = 0;
  long rejected = 0;
  long evaluations = 0;
};

// State is any dense Eigen type with complex or real coefficients.
// Rhs is callable as rhs(x, y, dy) and must not resize dy.
template <class State>
class Dop853 {
 public:
  explicit Dop853(Dop853Options opt = {}) : opt_(opt) {}

  const Dop853Stats& stats() const { return stats_; }

  // Sorted points the integrator must step onto exactly (the right-hand side
  // may lose smoothness there).
  void set_stops(std::vector<double> stops) { stops_ = std::move(stops); }
  double last_step() const { return last_h_; }

  // Integrates from x0 to x1 (x1 > x0). Every x in `report` lying in
  // [x0, x1] is passed to sink(index, x, y) through dense output.
  template <class Rhs, class Sink>
  void integrate(Rhs&& rhs, double x0, double x1, State& y,
                 const std::vector<double>& report, Sink&& sink) {
    using namespace dop853_tableau;
    allocate(y);
    std::size_t next = 0;
    while (next < report.size() && report[next] < x0) ++next;
    while (next < report.size() && report[next] == x0) {
      sink(next, x0, y);
      ++next;
    }
    if (x1 <= x0) return;

    double x = x0;
    rhs(x, y, k1_);
    ++stats_.evaluations;
    double h = opt_.h_init > 0 ? std::min(opt_.h_init, x1 - x0) : initial_step(rhs, x, x1, y);
    const double span = x1 - x0;
    bool last = false;
    bool rejected = false;
    auto stop = std::upper_bound(stops_.begin(), stops_.end(), x0 + 1e-14 * (1.0 + std::abs(x0)));

    while (true) {
      if (stats_.steps > opt_.max_steps)
        throw std::runtime_error("dop853: step limit exceeded");
      if (0.1 * std::abs(h) <= std::abs(x) * 1e-15 + 1e-300)
        throw std::runtime_error("dop853: step size underflow");
      double h_free = h;
      if (x + 1.01 * h - x1 > 0.0) {
        h = x1 - x;
        last = true;
      }
      bool clipped = false;
      while (stop != stops_.end() && *stop <= x + 1e-14 * (1.0 + std::abs(x))) ++stop;
      if (!last && stop != stops_.end() && *stop < x1 && x + 1.01 * h > *stop) {
        h = *stop - x;
        clipped = true;
      }
      ++stats_.steps;
      stages(rhs, x, h, y);
      const double err = error_norm(y, h);
      const double fac11 = std::pow(err, 0.125);
      const double fac = std::clamp(fac11 / 0.9, 1.0 / 6.0, 3.0);
      double hnew = h / fac;
      if (err <= 1.0) {
        rhs(x + h, ynew_, k4_);
        ++stats_.evaluations;
        const double xnew = x + h;
        if (next < report.size() && report[next] <= xnew) {
          dense_coefficients(rhs, x, h, y);
          while (next < report.size() && report[next] <= xnew) {
            interpolate(x, h, report[next], yout_);
            sink(next, report[next], yout_);
            ++next;
          }
        }
        k1_ = k4_;
        y = ynew_;
        x = clipped ? *stop : xnew;
        last_h_ = h;
        if (last) break;
        if (clipped) hnew = std::max(hnew, std::min(h_free, 3.0 * std::abs(h)));
        if (std::abs(hnew) > span) hnew = span;
        if (rejected) hnew = std::min(std::abs(hnew), std::abs(h));
        rejected = false;
      } else {
        hnew = h / std::min(3.0, fac11 / 0.9);
        rejected = true;
        last = false;
        ++stats_.rejected;
      }
      h = hnew;
    }
  }

  template <class Rhs>
  void integrate(Rhs&& rhs, double x0, double x1, State& y) {
    integrate(std::forward<Rhs>(rhs), x0, x1, y, {}, [](std::size_t, double, const State&) {});
  }

 private:
  void allocate(const State& y) {
    for (State* s : {&k1_, &k2_, &k3_, &k4_, &k5_, &k6_, &k7_, &k8_, &k9_, &k10_, &yt_, &ynew_,
                     &yout_, &r1_, &r2_, &r3_, &r4_, &r5_, &r6_, &r7_, &r8_})
      s->resizeLike(y);
  }

  template <class Rhs>
  double initial_step(Rhs& rhs, double x, double x1, const State& y) {
    const double sk_floor = opt_.atol;
    auto scaled = [&](const State& v, const State& ref) {
      double s = 0.0;
      for (Eigen::Index i = 0; i < v.size(); ++i) {
        const double sk = sk_floor + opt_.rtol * std::abs(ref(i));
        s += std::norm(v(i)) / (sk * sk);
      }
      return std::sqrt(s / double(v.size()));
    };
    const double dnf = scaled(k1_, y);
    const double dny = scaled(y, y);
    double h = (dnf <= 1e-10 || dny <= 1e-10) ? 1e-6 : 0.01 * dny / dnf;
    h = std::min(h, x1 - x);
    yt_ = y + h * k1_;
    rhs(x + h, yt_, k2_);
    ++stats_.evaluations;
    k3_ = k2_ - k1_;
    const double der2 = scaled(k3_, y) / h;
    const double der12 = std::max(std::abs(der2), std::sqrt(dnf));
    const double h1 = der12 <= 1e-15 ? std::max(1e-6, std::abs(h) * 1e-3)
                                     : std::pow(0.01 / der12, 1.0 / 8.0);
    return std::min({100.0 * std::abs(h), h1, x1 - x});
  }

  template <class Rhs>
  void stages(Rhs& rhs, double x, double h, const State& y) {
    using namespace dop853_tableau;
    yt_ = y + h * (a21 * k1_);
    rhs(x + c2 * h, yt_, k2_);
    yt_ = y + h * (a31 * k1_ + a32 * k2_);
    rhs(x + c3 * h, yt_, k3_);
    yt_ = y + h * (a41 * k1_ + a43 * k3_);
    rhs(x + c4 * h, yt_, k4_);
    yt_ = y + h * (a51 * k1_ + a53 * k3_ + a54 * k4_);
    rhs(x + c5 * h, yt_, k5_);
    yt_ = y + h * (a61 * k1_ + a64 * k4_ + a65 * k5_);
    rhs(x + c6 * h, yt_, k6_);
    yt_ = y + h * (a71 * k1_ + a74 * k4_ + a75 * k5_ + a76 * k6_);
    rhs(x + c7 * h, yt_, k7_);
    yt_ = y + h * (a81 * k1_ + a84 * k4_ + a85 * k5_ + a86 * k6_ + a87 * k7_);
    rhs(x + c8 * h, yt_, k8_);
    yt_ = y + h * (a91 * k1_ + a94 * k4_ + a95 * k5_ + a96 * k6_ + a97 * k7_ + a98 * k8_);
    rhs(x + c9 * h, yt_, k9_);
    yt_ = y + h * (a101 * k1_ + a104 * k4_ + a105 * k5_ + a106 * k6_ + a107 * k7_ + a108 * k8_ +
                   a109 * k9_);
    rhs(x + c10 * h, yt_, k10_);
    yt_ = y + h * (a111 * k1_ + a114 * k4_ + a115 * k5_ + a116 * k6_ + a117 * k7_ + a118 * k8_ +
                   a119 * k9_ + a1110 * k10_);
    rhs(x + c11 * h, yt_, k2_);
    yt_ = y + h * (a121 * k1_ + a124 * k4_ + a125 * k5_ + a126 * k6_ + a127 * k7_ + a128 * k8_ +
                   a129 * k9_ + a1210 * k10_ + a1211 * k2_);
    rhs(x + h, yt_, k3_);
    stats_.evaluations += 11;
    k4_ = b1 * k1_ + b6 * k6_ + b7 * k7_ + b8 * k8_ + b9 * k9_ + b10 * k10_ + b11 * k2_ + b12 * k3_;
    ynew_ = y + h * k4_;
  }

  double error_norm(const State& y, double h) const {
    using namespace dop853_tableau;
    double err3 = 0.0, err5 = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      const double sk = opt_.atol + opt_.rtol * std::max(std::abs(y(i)), std::abs(ynew_(i)));
      const auto e3 = k4_(i) - e31 * k1_(i) - e32 * k9_(i) - e33 * k3_(i);
      const auto e5 = e51 * k1_(i) + e56 * k6_(i) + e57 * k7_(i) + e58 * k8_(i) + e59 * k9_(i) +
                      e510 * k10_(i) + e511 * k2_(i) + e512 * k3_(i);
      err3 += std::norm(e3) / (sk * sk);
      err5 += std::norm(e5) / (sk * sk);
    }
    double deno = err5 + 0.01 * err3;
    if (deno <= 0.0) deno = 1.0;
    return std::abs(h) * err5 * std::sqrt(1.0 / (double(y.size()) * deno));
  }

  // k4_ holds f(x+h, ynew_) on entry.
  template <class Rhs>
  void dense_coefficients(Rhs& rhs, double x, double h, const State& y) {
    using namespace dop853_tableau;
    r1_ = y;
    r2_ = ynew_ - y;
    r3_ = h * k1_ - r2_;
    r4_ = r2_ - h * k4_ - r3_;
    r5_ = d41 * k1_ + d46 * k6_ + d47 * k7_ + d48 * k8_ + d49 * k9_ + d410 * k10_ + d411 * k2_ +
          d412 * k3_;
    r6_ = d51 * k1_ + d56 * k6_ + d57 * k7_ + d58 * k8_ + d59 * k9_ + d510 * k10_ + d511 * k2_ +
          d512 * k3_;
    r7_ = d61 * k1_ + d66 * k6_ + d67 * k7_ + d68 * k8_ + d69 * k9_ + d610 * k10_ + d611 * k2_ +
          d612 * k3_;
    r8_ = d71 * k1_ + d76 * k6_ + d77 * k7_ + d78 * k8_ + d79 * k9_ + d710 * k10_ + d711 * k2_ +
          d712 * k3_;
    yt_ = y + h * (a141 * k1_ + a147 * k7_ + a148 * k8_ + a149 * k9_ + a1410 * k10_ +
                   a1411 * k2_ + a1412 * k3_ + a1413 * k4_);
    rhs(x + c14 * h, yt_, k10_);
    yt_ = y + h * (a151 * k1_ + a156 * k6_ + a157 * k7_ + a158 * k8_ + a1511 * k2_ +
                   a1512 * k3_ + a1513 * k4_ + a1514 * k10_);
    rhs(x + c15 * h, yt_, k2_);
    yt_ = y + h * (a161 * k1_ + a166 * k6_ + a167 * k7_ + a168 * k8_ + a169 * k9_ +
                   a1613 * k4_ + a1614 * k10_ + a1615 * k2_);
    rhs(x + c16 * h, yt_, k3_);
    stats_.evaluations += 3;
    r5_ = h * (r5_ + d413 * k4_ + d414 * k10_ + d415 * k2_ + d416 * k3_);
    r6_ = h * (r6_ + d513 * k4_ + d514 * k10_ + d515 * k2_ + d516 * k3_);
    r7_ = h * (r7_ + d613 * k4_ + d614 * k10_ + d615 * k2_ + d616 * k3_);
    r8_ = h * (r8_ + d713 * k4_ + d714 * k10_ + d715 * k2_ + d716 * k3_);
  }

  void interpolate(double x, double h, double xo, State& out) const {
    const double s = (xo - x) / h;
    const double s1 = 1.0 - s;
    out = r1_ + s * (r2_ + s1 * (r3_ + s * (r4_ + s1 * (r5_ + s * (r6_ + s1 * (r7_ + s * r8_))))));
  }

  Dop853Options opt_;
  Dop853Stats stats_;
  std::vector<double> stops_;
  double last_h_ = 0.0;
  State k1_, k2_, k3_, k4_, k5_, k6_, k7_, k8_, k9_, k10_, yt_, ynew_, yout_;
  State r1_, r2_, r3_, r4_, r5_, r6_, r7_, r8_;
};

}  // namespace qpencil
