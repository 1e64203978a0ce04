// MatMul(128,128,32)(GL,GL,GL)(Kernel)
// grid 1x1, 256 threads per block

__global__ void matmul_128x128x32(const float* A, const float* B, float* C) {
  constexpr int M = 128, N = 128, K = 32;

  float C_rf_1[64];
  __shared__ __align__(4) float B_sh_6[1024];
  __shared__ __align__(4) float A_sh_10[1024];
  float A_rf_17[8];
  float B_rf_19[8];

  for (int row4 = 0; row4 < 8; ++row4) {
    for (int col4 = 0; col4 < 8; ++col4) {
      C_rf_1[(row4 + (col4 * 8))] = 0.0f;
    }
  }
  for (int k5 = 0; k5 < 4; ++k5) {
    for (int row9 = 0; row9 < 1; ++row9) {
      for (int col9 = 0; col9 < 4; ++col9) {
        B_sh_6[((((threadIdx.x % 32) % 8) + row9) + (((((threadIdx.x / 32) * 16) + (((threadIdx.x % 32) / 8) * 4)) + col9) * 8))] = B[((((k5 * 8) + ((threadIdx.x % 32) % 8)) + row9) + (((((blockIdx.y * 128) + ((threadIdx.x / 32) * 16)) + (((threadIdx.x % 32) / 8) * 4)) + col9) * 32))];
      }
    }
    __syncthreads();
    for (int row13 = 0; row13 < 4; ++row13) {
      for (int col13 = 0; col13 < 1; ++col13) {
        A_sh_10[((((((threadIdx.x / 32) % 8) * 16) + (((threadIdx.x % 32) % 4) * 4)) + row13) + ((((((threadIdx.x / 32) / 8) * 8) + ((threadIdx.x % 32) / 4)) + col13) * 128))] = A[(((((blockIdx.x * 128) + (((threadIdx.x / 32) % 8) * 16)) + (((threadIdx.x % 32) % 4) * 4)) + row13) + (((((k5 * 8) + (((threadIdx.x / 32) / 8) * 8)) + ((threadIdx.x % 32) / 4)) + col13) * 128))];
      }
    }
    __syncthreads();
    for (int k16 = 0; k16 < 8; ++k16) {
      for (int row18 = 0; row18 < 8; ++row18) {
        for (int col18 = 0; col18 < 1; ++col18) {
          A_rf_17[(row18 + (col18 * 8))] = A_sh_10[((((((threadIdx.x / 32) % 2) * 64) + (((threadIdx.x % 32) % 8) * 8)) + row18) + ((k16 + col18) * 128))];
        }
      }
      for (int row20 = 0; row20 < 1; ++row20) {
        for (int col20 = 0; col20 < 8; ++col20) {
          B_rf_19[(row20 + col20)] = B_sh_6[((k16 + row20) + ((((((threadIdx.x / 32) / 2) * 32) + (((threadIdx.x % 32) / 8) * 8)) + col20) * 8))];
        }
      }
      for (int row21 = 0; row21 < 8; ++row21) {
        for (int col21 = 0; col21 < 8; ++col21) {
          C_rf_1[(row21 + (col21 * 8))] += A_rf_17[row21] * B_rf_19[col21];
        }
      }
    }
    __syncthreads();
  }
  for (int row24 = 0; row24 < 8; ++row24) {
    for (int col24 = 0; col24 < 8; ++col24) {
      C[(((((blockIdx.x * 128) + (((threadIdx.x / 32) % 2) * 64)) + (((threadIdx.x % 32) % 8) * 8)) + row24) + (((((blockIdx.y * 128) + (((threadIdx.x / 32) / 2) * 32)) + (((threadIdx.x % 32) / 8) * 8)) + col24) * 128))] = C_rf_1[(row24 + (col24 * 8))];
    }
  }
}
