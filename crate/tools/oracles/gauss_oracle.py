"""Multiprecision Gaussian oracle for the pinned on-off, Fisher, crossover and CAS values (mpmath, 40 digits)."""
from mpmath import mp, mpf, matrix, cosh, sinh, asinh, sqrt, det, diff, exp, laguerre, findroot, eye
mp.dps = 40
def S(r):
    M = eye(4)
    ch, sh = cosh(r), sinh(r)
    Z = [1, -1]
    for u in range(2):
        M[u,u] = ch; M[2+u,2+u] = ch
        M[u,2+u] = -sh*Z[u]; M[2+u,u] = -sh*Z[u]
    return M
def onoff(n_a, n_th, alpha):
    r = asinh(sqrt(n_a))
    V = S(r)*S(r).T
    t = sqrt(1-alpha)
    L = eye(4); L[0,0]=t; L[1,1]=t
    N = matrix(4,4); N[0,0]=alpha*(2*n_th+1); N[1,1]=alpha*(2*n_th+1)
    V = L*V*L.T + N
    V = S(-r)*V*S(-r).T
    p00 = 4/sqrt(det(V+eye(4)))
    Vs = matrix([[V[0,0],V[0,1]],[V[1,0],V[1,1]]]); Vi = matrix([[V[2,2],V[2,3]],[V[3,2],V[3,3]]])
    zs = 2/sqrt(det(Vs+eye(2))); zi = 2/sqrt(det(Vi+eye(2)))
    return [p00, zs-p00, zi-p00, 1-zs-zi+p00]
def fi(n_a, n_th, alpha):
    return sum(diff(lambda a: onoff(n_a,n_th,a)[k], alpha)**2/onoff(n_a,n_th,alpha)[k] for k in range(4))
print("onoff 0.1", [mp.nstr(x, 17) for x in onoff(1,1,mpf('0.1'))])
for a in ['0.01','0.1','0.3']:
    a = mpf(a); f = fi(1,1,a); q = 4/(a*(1-a))
    print("fi", a, mp.nstr(f, 17), "ratio", mp.nstr(f/q, 17))
a = mpf('0.01'); target = 1/fi(1,1,a)
m = a*1
cv = lambda N: (m*(m+1) + (1-a)*N*(2*m+1))/(N-1)**2
Nstar = findroot(lambda N: cv(N)-target, 380)
print("Nstar", mp.nstr(Nstar, 17), "target", mp.nstr(target, 17))
# CAS displaced thermal number distribution
def cas(n_a, alpha, n_th, n):
    m = alpha*n_th; b2 = (1-alpha)*n_a
    if m == 0:
        return exp(-b2)*b2**n/mp.factorial(n)
    return m**n/(1+m)**(n+1)*exp(-b2/(1+m))*laguerre(n, 0, -b2/(m*(1+m)))
print("cas", [mp.nstr(cas(1, mpf('0.01'), 1, n), 17) for n in range(6)])
