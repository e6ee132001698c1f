# Regenerates the NIfTI-1 fixtures with nibabel (not needed to run tests).
import numpy as np
import nibabel as nib


def save(arr, zooms, order, name):
    hdr = nib.Nifti1Header(endianness=order)
    hdr.set_data_shape(arr.shape)
    hdr.set_data_dtype(arr.dtype.newbyteorder("="))
    hdr.set_zooms(zooms)
    hdr["scl_slope"] = 1.0
    hdr["scl_inter"] = 0.0
    nib.Nifti1Image(arr, None, header=hdr).to_filename(name)


# value(x, y, z) = 100 z + 10 y + x + 0.5 with x fastest on disk
x = np.fromfunction(lambda i, j, k: 100 * k + 10 * j + i + 0.5, (4, 4, 4)).astype(np.float32)
save(x, (1.0, 1.0, 1.0), "<", "ramp_f32_le.nii")
save(x, (1.0, 1.0, 1.0), ">", "ramp_f32_be.nii")
codes = np.array([0, 10, 150, 250], dtype=np.uint8)
save(codes[np.arange(30).reshape(2, 3, 5).transpose(2, 1, 0) % 4], (0.5, 1.25, 2.0), "<", "labels_u8_le.nii")
save((np.arange(24).reshape(4, 3, 2) - 7).astype(np.int16), (1.0, 1.0, 1.0), ">", "ramp_i16_be.nii")
