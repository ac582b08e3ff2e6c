from setuptools import setup, find_packages

setup(
    name="LesionABC",
    version="0.1.0",
    description="皮损 ABC 标注、统计分析与多任务学习工程",
    long_description="基于Python的皮损图像 ABC（不对称、边界、颜色）自动标注、多来源标注聚合与相关性分析，以及带标注辅助回归头的多任务分类训练。",
    author="Your Name",
    author_email="your.email@example.com",
    url="",
    packages=find_packages(include=["src", "src.*"]),
    include_package_data=True,
    install_requires=[
        "numpy==1.26.4",
        "scipy==1.12.0",
        "pandas==2.2.1",
        "pyyaml==6.0.1",
        "tqdm==4.66.1",
        "Pillow==10.2.0",
        "scikit-image==0.22.0",
    ],
    extras_require={
        "dev": [
            "mypy==1.8.0",
            "pytest==7.4.0",
            "black==23.3.0",
            "flake8==6.0.0",
        ],
    },
    classifiers=[
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
        "Intended Audience :: Science/Research",
        "Topic :: Scientific/Engineering :: Image Processing",
        "Topic :: Scientific/Engineering :: Medical Science Apps.",
    ],
    python_requires=">=3.10",
    entry_points={
        "console_scripts": [
            "lesionabc=src.core.main:main",
        ],
    },
)
