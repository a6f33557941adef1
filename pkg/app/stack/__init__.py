"""
Stack module for cloudfill

時空間画像スタックのデータモデルとディスク上のコンテナ形式

公開API:
- BandSpec / Modality / Scene / ObservationMatrix: データモデル
- matricize / dematricize / reconstructed_scene: 行列表現との相互変換
- write_stack / read_stack: Sceneコンテナ
- write_mask / read_mask / sample_library_mask: マスクコンテナ・マスクライブラリ
- write_holdout / read_holdout: holdout.bin
- IndexRaster / write_index / read_index: 単バンド指数ラスタ
"""

from .model import (
    BandSpec,
    Modality,
    ObservationMatrix,
    Scene,
    VALID_RANGES,
    dematricize,
    matricize,
    reconstructed_scene,
)

from .io import (
    FORMAT_VERSION,
    IndexRaster,
    list_mask_library,
    read_holdout,
    read_index,
    read_mask,
    read_stack,
    sample_library_mask,
    write_holdout,
    write_index,
    write_mask,
    write_stack,
)

__all__ = [
    # Models
    "BandSpec",
    "Modality",
    "ObservationMatrix",
    "Scene",
    "VALID_RANGES",
    "dematricize",
    "matricize",
    "reconstructed_scene",
    # Containers
    "FORMAT_VERSION",
    "IndexRaster",
    "list_mask_library",
    "read_holdout",
    "read_index",
    "read_mask",
    "read_stack",
    "sample_library_mask",
    "write_holdout",
    "write_index",
    "write_mask",
    "write_stack",
]
