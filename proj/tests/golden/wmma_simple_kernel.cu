// MatMul(64,64,16)(GL,GL,GL)(Kernel)
// grid 1x1, 512 threads per block
#include <mma.h>
using namespace nvcuda;
using namespace nvcuda::wmma;

__global__ void matmul_64x64x16(const half* A, const half* B, float* C) {
  constexpr int M = 64, N = 64, K = 16;

  wmma::fragment<wmma::accumulator, 16, 16, 16, float> C_fr_1[1];
  wmma::fragment<wmma::matrix_a, 16, 16, 16, half, wmma::col_major> A_fr_5[1];
  wmma::fragment<wmma::matrix_b, 16, 16, 16, half, wmma::col_major> B_fr_6[1];

  fill_fragment(C_fr_1[0], 0.0f);
  for (int k3 = 0; k3 < 1; ++k3) {
    wmma::load_matrix_sync(A_fr_5[0], &A[(((blockIdx.x * 64) + (((threadIdx.x / 32) % 4) * 16)) + (k3 * 1024))], 64);
    wmma::load_matrix_sync(B_fr_6[0], &B[((k3 * 16) + (((blockIdx.y * 64) + (((threadIdx.x / 32) / 4) * 16)) * 16))], 16);
    wmma::mma_sync(C_fr_1[0], A_fr_5[0], B_fr_6[0], C_fr_1[0]);
  }
  wmma::store_matrix_sync(&C[(((blockIdx.x * 64) + (((threadIdx.x / 32) % 4) * 16)) + (((blockIdx.y * 64) + (((threadIdx.x / 32) / 4) * 16)) * 64))], C_fr_1[0], 64, wmma::mem_col_major);
}
