# lpla — ℓp 逐元素低秩近似：列子集选择、双准则选列、降秩与数值验证
