/* BATAX: generated kernel
 * organism: {_{p(i)}{_i{_j 1}{_j 2}}}{_{p(j)}{_j 3}};t=4,4
 */
#include <stdio.h>
#include <stdlib.h>
#include <time.h>

void batax(const double *restrict x, double beta, const double *restrict A, double *restrict y, long M, long N) {
    double *t1 = (double *)malloc(sizeof(double) * (size_t)N);
    double *t1_part = (double *)malloc(sizeof(double) * (size_t)4 * (size_t)N);
    #pragma omp parallel for num_threads(4) schedule(static)
    for (long p0 = 0; p0 < 4; ++p0) {
        long i_lo = (M * p0) / 4;
        long i_hi = (M * (p0 + 1)) / 4;
        for (long j = 0; j < N; ++j) {
            t1_part[p0 * (N) + j] = 0.0;
        }
        for (long i = i_lo; i < i_hi; ++i) {
            double t0_s = 0.0;
            for (long j = 0; j < N; ++j) {
                t0_s += A[i * N + j] * x[j];
            }
            for (long j = 0; j < N; ++j) {
                t1_part[p0 * (N) + j] += A[i * N + j] * t0_s;
            }
        }
    }
    for (long j = 0; j < N; ++j) {
        double acc = t1_part[j];
        for (long b = 1; b < 4; ++b) {
            acc += t1_part[b * (N) + j];
        }
        t1[j] = acc;
    }
    free(t1_part);
    #pragma omp parallel for num_threads(4) schedule(static)
    for (long p1 = 0; p1 < 4; ++p1) {
        long j_lo = (N * p1) / 4;
        long j_hi = (N * (p1 + 1)) / 4;
        for (long j = j_lo; j < j_hi; ++j) {
            y[j] = t1[j] * beta;
        }
    }
    free(t1);
}

#ifndef MATFUSE_NO_MAIN
static unsigned long long rng_state_ = 88172645463325252ULL;
static double rnd_(void) {
    rng_state_ = rng_state_ * 6364136223846793005ULL + 1442695040888963407ULL;
    return (double)(rng_state_ >> 11) / 9007199254740992.0;
}
static double now_(void) {
    struct timespec ts;
    clock_gettime(CLOCK_MONOTONIC, &ts);
    return (double)ts.tv_sec + 1e-9 * (double)ts.tv_nsec;
}
int main(int argc, char **argv) {
    long M = argc > 1 ? atol(argv[1]) : 200;
    long N = argc > 2 ? atol(argv[2]) : 200;
    long reps = argc > 3 ? atol(argv[3]) : 5;
    double *x = (double *)malloc(sizeof(double) * (size_t)N);
    for (size_t q = 0; q < (size_t)N; ++q) {
        x[q] = rnd_();
    }
    double beta = rnd_();
    double *A = (double *)malloc(sizeof(double) * (size_t)M * (size_t)N);
    for (size_t q = 0; q < (size_t)M * (size_t)N; ++q) {
        A[q] = rnd_();
    }
    double *y = (double *)calloc((size_t)N, sizeof(double));
    batax(x, beta, A, y, M, N); /* warm-up, untimed */
    double best = 1e300;
    for (long r = 0; r < reps; ++r) {
        double t0 = now_();
        batax(x, beta, A, y, M, N);
        double dt = now_() - t0;
        if (dt < best) best = dt;
    }
    double checksum = 0.0;
    for (size_t q = 0; q < (size_t)N; ++q) {
        checksum += y[q];
    }
    printf("seconds %.9e\nchecksum %.17g\n", best, checksum);
    return 0;
}
#endif /* MATFUSE_NO_MAIN */
