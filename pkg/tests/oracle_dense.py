"""Independent dense assembly oracle.

Implements the same weak form as the sparse assembly but through a
deliberately different path: naive Python loops over elements, quadrature
points and local basis indices, with basis coefficients obtained by solving
small linear systems per element (never reusing the mesh geometry tables).
Every term, including mass and stiffness, is integrated numerically with
the assembly quadrature rule.
"""

import numpy as np

from stokes_asgs.fem_space import quadrature_rule


def _basis_coefficients(coords):
    """Coefficients (a_i, b_i, c_i) of lambda_i = a_i x + b_i y + c_i."""
    V = np.column_stack([coords[:, 0], coords[:, 1], np.ones(3)])
    return np.linalg.solve(V, np.eye(3))  # column i holds coeffs of lambda_i


def dense_assemble(mesh, dofmap, state_n, subscale_n, scheme, params, forcing):
    """Dense (matrix, rhs) for one step, same unknown layout as the package."""
    n_u, n_p = dofmap.n_u, dofmap.n_p
    n_total = dofmap.n_dofs
    A = np.zeros((n_total, n_total))
    b = np.zeros(n_total)

    rule = quadrature_rule(5)
    alpha = 0.5 * (1 + scheme.theta)
    dt = scheme.dt
    dt_eff = alpha * dt
    mu = params.mu

    for k in range(mesh.n_triangles):
        idx = mesh.triangles[k]
        coords = mesh.vertices[idx]
        coeff = _basis_coefficients(coords)  # (3 coeff rows a,b,c) x (3 basis)
        grads = coeff[:2, :].T               # (3 basis, 2)
        e01 = coords[1] - coords[0]
        e02 = coords[2] - coords[0]
        area = 0.5 * abs(e01[0] * e02[1] - e01[1] * e02[0])
        edges = [coords[1] - coords[0], coords[2] - coords[1], coords[0] - coords[2]]
        h_k = max(np.hypot(e[0], e[1]) for e in edges)

        if params.stabilized:
            tau1 = h_k ** 2 / (params.c1 * mu)
            tau2 = params.c2 * h_k ** 2 / tau1
            tau1p = tau1 * dt_eff / (dt_eff + tau1)
            m_k = tau1 / (dt_eff + tau1)
        else:
            tau2 = tau1p = m_k = 0.0
        w_k = 1.0 - m_k

        u_old = np.stack([state_n.u1[idx], state_n.u2[idx]], axis=1)  # (3, 2)
        p_rows = 2 * n_u + idx

        for q, bary in enumerate(rule.points):
            wgt = rule.weights[q] * area
            lam = bary
            pt = bary @ coords
            f_old = np.array([f[()] if np.ndim(f) == 0 else f
                              for f in forcing(pt[0], pt[1], state_n.t)], dtype=float)
            f_new = np.array([f[()] if np.ndim(f) == 0 else f
                              for f in forcing(pt[0], pt[1], state_n.t + dt)], dtype=float)
            f_mid = alpha * f_new + (1 - alpha) * f_old
            d1 = subscale_n.uprime[k, q] / dt_eff
            u_old_q = lam @ u_old  # (2,)

            for i in range(3):
                for c in range(2):
                    row = c * n_u + idx[i]
                    # momentum: unknown velocity blocks
                    for j in range(3):
                        for cp in range(2):
                            col = cp * n_u + idx[j]
                            val = 0.0
                            if c == cp:
                                val += (w_k / dt) * lam[i] * lam[j]
                                val += mu * alpha * grads[i] @ grads[j]
                            val += alpha * tau2 * grads[i][c] * grads[j][cp]
                            A[row, col] += wgt * val
                        # momentum: pressure blocks
                        pcol = 2 * n_u + idx[j]
                        A[row, pcol] += wgt * (-grads[i][c] * lam[j]
                                               - m_k * lam[i] * grads[j][c])
                    # momentum rhs
                    visc_old = sum(grads[i] @ grads[j] * u_old[j, c] for j in range(3))
                    div_old = sum(grads[j] @ u_old[j] for j in range(3))
                    b[row] += wgt * ((w_k / dt) * lam[i] * u_old_q[c]
                                     - mu * (1 - alpha) * visc_old
                                     - (1 - alpha) * tau2 * grads[i][c] * div_old
                                     + w_k * lam[i] * d1[c]
                                     + w_k * lam[i] * f_mid[c])

                # continuity row for test function lambda_i
                row = 2 * n_u + idx[i]
                for j in range(3):
                    for cp in range(2):
                        col = cp * n_u + idx[j]
                        A[row, col] += wgt * (alpha * lam[i] * grads[j][cp]
                                              + (tau1p / dt) * grads[i][cp] * lam[j])
                    pcol = 2 * n_u + idx[j]
                    A[row, pcol] += wgt * tau1p * (grads[i] @ grads[j])
                b[row] += wgt * (-(1 - alpha) * lam[i]
                                 * sum(grads[j] @ u_old[j] for j in range(3))
                                 + (tau1p / dt) * grads[i] @ u_old_q
                                 + tau1p * grads[i] @ d1
                                 + tau1p * grads[i] @ f_mid)

    # mean-pressure multiplier row/column
    mult = dofmap.multiplier_index
    for i in range(n_p):
        A[2 * n_u + i, mult] += dofmap.mean_vector[i]
        A[mult, 2 * n_u + i] += dofmap.mean_vector[i]

    # Dirichlet row replacement
    for d in dofmap.dirichlet_dofs:
        A[d, :] = 0.0
        A[d, d] = 1.0
        b[d] = 0.0
    b[mult] = 0.0
    return A, b
