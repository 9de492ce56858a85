#include "qrestore/qimage.hpp"

namespace qrestore {

QImage encode(const Image& img) {
  QImage q(img.height, img.width);
  const size_t n = img.plane_size();
  const double* r = img.data.data();
  const double* g = r + n;
  const double* b = g + n;
  double* ql = q.data.data();
  double* qr = ql + n;
  double* qg = qr + n;
  double* qb = qg + n;
  for (size_t i = 0; i < n; ++i) {
    ql[i] = luma(r[i], g[i], b[i]);
    qr[i] = r[i];
    qg[i] = g[i];
    qb[i] = b[i];
  }
  return q;
}

Image decode(const QImage& q) {
  Image img(q.height, q.width);
  const size_t n = q.plane_size();
  // copy planes 1..3 verbatim
  for (size_t i = 0; i < 3 * n; ++i) img.data[i] = q.data[n + i];
  return img;
}

void regenerate_luma(QImage& q) {
  const size_t n = q.plane_size();
  double* ql = q.data.data();
  const double* qr = ql + n;
  const double* qg = qr + n;
  const double* qb = qg + n;
  for (size_t i = 0; i < n; ++i) ql[i] = luma(qr[i], qg[i], qb[i]);
}

}  // namespace qrestore
