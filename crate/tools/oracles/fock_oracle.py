"""Independent Fock-space oracle: purified thermal environment, beam-splitter loss and OPA applied by sparse expm on a 4-mode, 40-level space."""
import numpy as np, scipy.sparse as sp
from scipy.sparse.linalg import expm_multiply
D = 40
a = sp.diags(np.sqrt(np.arange(1, D)), 1, format='csr')
I = sp.identity(D, format='csr')
def op(m, k):  # mode k of 4
    mats = [I]*4; mats[k] = m
    out = mats[0]
    for x in mats[1:]:
        out = sp.kron(out, x, format='csr')
    return out
A = [op(a, k) for k in range(4)]
def state(n_a, n_th, alpha):
    r = np.arcsinh(np.sqrt(n_a)); q = np.arcsinh(np.sqrt(n_th))
    c = np.array([(-np.tanh(r))**n/np.cosh(r) for n in range(D)])
    d = np.array([(-np.tanh(q))**n/np.cosh(q) for n in range(D)])
    si = np.zeros((D, D)); np.fill_diagonal(si, c)
    ef = np.zeros((D, D)); np.fill_diagonal(ef, d)
    psi = np.einsum('ab,cd->abcd', si, ef).reshape(-1).astype(complex)
    th = np.arcsin(np.sqrt(alpha))
    G = th*(A[0].T@A[2] - A[0]@A[2].T)
    psi = expm_multiply(G, psi)
    Gs = -r*(A[0]@A[1] - A[0].T@A[1].T)
    psi = expm_multiply(Gs, psi)
    P = (np.abs(psi.reshape(D, D, D, D))**2).sum(axis=(2, 3))
    return P
P = state(1.0, 1.0, 0.1)
print("total", P.sum())
for k in [(0,0),(0,1),(1,0),(1,1),(2,0),(0,2),(2,1),(1,2),(2,2),(3,0)]:
    print(k, repr(P[k]))
p00 = P[0,0]; p0c = P[0,1:].sum(); pc0 = P[1:,0].sum()
print("onoff", repr(p00), repr(p0c), repr(pc0), repr(1-p00-p0c-pc0))
