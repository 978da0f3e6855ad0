/**
 * Convergence-order computations, matching the solver's diagnostics:
 * pairwise orders are log(E_i/E_{i+1}) / log(h_i/h_{i+1}) and the global
 * slope is the least-squares fit of log E against log h.
 */

export function observedOrders(h: number[], errors: number[]): number[] {
  if (h.length !== errors.length || h.length < 2) {
    throw new Error("need matching h/error sequences with at least two entries");
  }
  const orders: number[] = [];
  for (let i = 0; i + 1 < h.length; i++) {
    orders.push(Math.log(errors[i] / errors[i + 1]) / Math.log(h[i] / h[i + 1]));
  }
  return orders;
}

export function leastSquaresOrder(h: number[], errors: number[]): number {
  if (h.length !== errors.length || h.length < 2) {
    throw new Error("need matching h/error sequences with at least two entries");
  }
  const x = h.map(Math.log);
  const y = errors.map((e) => Math.log(e));
  const n = x.length;
  const mx = x.reduce((a, b) => a + b, 0) / n;
  const my = y.reduce((a, b) => a + b, 0) / n;
  let sxx = 0;
  let sxy = 0;
  for (let i = 0; i < n; i++) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  return sxy / sxx;
}

/** Average decades of decay per unit abscissa (semilog slope). */
export function semilogSlope(x: number[], errors: number[]): number {
  const y = errors.map((e) => Math.log10(e));
  const n = x.length;
  const mx = x.reduce((a, b) => a + b, 0) / n;
  const my = y.reduce((a, b) => a + b, 0) / n;
  let sxx = 0;
  let sxy = 0;
  for (let i = 0; i < n; i++) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  return sxy / sxx;
}
